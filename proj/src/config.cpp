#include "tla/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace tla {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

ConfigValue parse_value(std::string_view raw, const ConfigKey& key, int line) {
  const auto mismatch = [&](const char* kind) {
    return ConfigError("'" + std::string(raw) + "' is not " + kind + " (key " + key.name + ")", line);
  };
  return std::visit(
      [&](const auto& def) -> ConfigValue {
        using T = std::decay_t<decltype(def)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          std::int64_t v = 0;
          if (!parse_number(raw, v)) throw mismatch("an integer");
          return v;
        } else if constexpr (std::is_same_v<T, double>) {
          double v = 0.0;
          if (!parse_number(raw, v) || !std::isfinite(v)) throw mismatch("a number");
          return v;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (raw == "true") return true;
          if (raw == "false") return false;
          throw mismatch("true or false");
        } else {
          return std::string(raw);
        }
      },
      key.default_value);
}

}  // namespace

std::string format_config_value(const ConfigValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", x);
          return buf;
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else {
          return x;
        }
      },
      v);
}

const ConfigValue& Config::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("config: no key '" + key + "'");
  return it->second;
}

std::int64_t Config::integer(const std::string& key) const {
  const auto* v = std::get_if<std::int64_t>(&at(key));
  if (!v) throw Error("config: key '" + key + "' is not an integer");
  return *v;
}

double Config::real(const std::string& key) const {
  const auto* v = std::get_if<double>(&at(key));
  if (!v) throw Error("config: key '" + key + "' is not a number");
  return *v;
}

const std::string& Config::text(const std::string& key) const {
  const auto* v = std::get_if<std::string>(&at(key));
  if (!v) throw Error("config: key '" + key + "' is not text");
  return *v;
}

bool Config::boolean(const std::string& key) const {
  const auto* v = std::get_if<bool>(&at(key));
  if (!v) throw Error("config: key '" + key + "' is not a boolean");
  return *v;
}

std::string Config::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + format_config_value(v) + "\n";
  return out;
}

std::string Config::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_text())));
  return buf;
}

Config parse_config(std::string_view text, std::span<const ConfigKey> schema) {
  std::map<std::string, ConfigValue> values;
  std::map<std::string, const ConfigKey*> by_name;
  for (const ConfigKey& k : schema) {
    by_name[k.name] = &k;
    values[k.name] = k.default_value;
  }
  std::set<std::string> seen;
  int line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key(trim(raw.substr(0, eq)));
    const std::string_view value = trim(raw.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key", line);
    const auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError("unknown key '" + key + "'", line);
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'", line);
    values[key] = parse_value(value, *it->second, line);
  }
  return Config(std::move(values));
}

}  // namespace tla
