#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tla {

/// One line of an evaluation report.
struct MethodRecord {
  std::string method;
  double top1_error = 0.0;
  int n = 0;
  std::string config_hash;
  std::uint64_t seed = 0;

  friend bool operator==(const MethodRecord&, const MethodRecord&) = default;
};

/// One JSON object per line: {method, top1_error, n, config_hash, seed}.
std::string report_jsonl(std::span<const MethodRecord> records);

/// Throws naming the 1-based line of the first malformed record.
std::vector<MethodRecord> parse_report(std::string_view jsonl);

/// Fixed-width table, one row per method, sorted by ascending error (ties by
/// method name), errors to 4 decimals.
std::string render_report(std::string_view jsonl);

/// {"epoch": i, "<key>": value} per line, epochs counted from 1.
std::string epoch_series_jsonl(std::span<const double> values, const std::string& key = "loss");

}  // namespace tla
