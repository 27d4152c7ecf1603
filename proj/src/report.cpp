#include "tla/report.hpp"

#include "tla/numerics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>

namespace tla {

using nlohmann::json;

std::string report_jsonl(std::span<const MethodRecord> records) {
  std::string out;
  for (const MethodRecord& r : records) {
    json j;
    j["method"] = r.method;
    j["top1_error"] = r.top1_error;
    j["n"] = r.n;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<MethodRecord> parse_report(std::string_view jsonl) {
  std::vector<MethodRecord> out;
  std::size_t pos = 0;
  int line = 0;
  while (pos < jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    const std::string_view raw = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json j = json::parse(raw);
      MethodRecord r;
      r.method = j.at("method").get<std::string>();
      r.top1_error = j.at("top1_error").get<double>();
      r.n = j.at("n").get<int>();
      if (j.contains("config_hash")) r.config_hash = j.at("config_hash").get<std::string>();
      if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
      if (r.top1_error < 0.0 || r.top1_error > 1.0 || r.n < 0) throw Error("values out of range");
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error("report line " + std::to_string(line) + ": malformed record: " + e.what());
    }
  }
  return out;
}

std::string render_report(std::string_view jsonl) {
  std::vector<MethodRecord> rows = parse_report(jsonl);
  std::stable_sort(rows.begin(), rows.end(), [](const MethodRecord& a, const MethodRecord& b) {
    return a.top1_error != b.top1_error ? a.top1_error < b.top1_error : a.method < b.method;
  });
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %10s  %6s\n", static_cast<int>(width), "method", "top1_error", "n");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %10.4f  %6d\n", static_cast<int>(width), r.method.c_str(), r.top1_error, r.n);
    out += buf;
  }
  return out;
}

std::string epoch_series_jsonl(std::span<const double> values, const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    json j;
    j["epoch"] = i + 1;
    j[key] = values[i];
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace tla
