#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tla::tools {

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Gradient check, eigen residuals and planted-partition clustering.
std::vector<CheckLine> run_selfcheck(std::uint64_t seed);

}  // namespace tla::tools
