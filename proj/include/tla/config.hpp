#pragma once

#include "tla/numerics.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>

namespace tla {

using ConfigValue = std::variant<std::int64_t, double, std::string, bool>;

/// One accepted key; its type is the type of the default.
struct ConfigKey {
  std::string name;
  ConfigValue default_value;
  std::string help;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line) : Error("config line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class Config {
 public:
  Config() = default;
  explicit Config(std::map<std::string, ConfigValue> values) : values_(std::move(values)) {}

  std::int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  bool boolean(const std::string& key) const;

  const std::map<std::string, ConfigValue>& values() const { return values_; }

  /// Every key as "key = value", sorted; reals print with round-trip precision.
  std::string canonical_text() const;
  /// 16 hex digits of the FNV-1a hash of canonical_text().
  std::string hash() const;

 private:
  const ConfigValue& at(const std::string& key) const;
  std::map<std::string, ConfigValue> values_;
};

/// Parses `key = value` lines against `schema`. Blank lines and text after
/// `#` are ignored. Unknown keys, duplicates and values that do not fit the
/// key's type raise ConfigError with the 1-based line number. Keys not
/// mentioned take their defaults.
Config parse_config(std::string_view text, std::span<const ConfigKey> schema);

std::string format_config_value(const ConfigValue& v);

}  // namespace tla
