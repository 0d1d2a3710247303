#pragma once

// Running simulation matrices and writing their results.
//
// CSV bodies are a pure function of the inputs: floats are printed with six
// significant digits and the only timestamp lives in a leading "#" comment
// line. JSON output carries the same rounded numbers as the CSV.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vodsim/config.hpp"
#include "vodsim/engine.hpp"
#include "vodsim/metrics.hpp"

namespace vodsim {

inline std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

using MetricValue = std::variant<long long, double, std::string>;

struct MetricColumn {
  const char* name;
  std::function<MetricValue(const MetricsReport&)> get;
};

inline const std::vector<MetricColumn>& metric_columns() {
  using M = MetricsReport;
  static const std::vector<MetricColumn> cols = {
      {"requests", [](const M& m) -> MetricValue { return m.requests; }},
      {"admitted", [](const M& m) -> MetricValue { return m.admitted; }},
      {"videos_streamed", [](const M& m) -> MetricValue { return m.videos_streamed; }},
      {"terminated", [](const M& m) -> MetricValue { return m.terminated; }},
      {"rejected", [](const M& m) -> MetricValue { return m.rejected; }},
      {"rejected_disk_bound", [](const M& m) -> MetricValue { return m.rejected_disk_bound; }},
      {"rejected_network_bound", [](const M& m) -> MetricValue { return m.rejected_network_bound; }},
      {"rejected_cache_full", [](const M& m) -> MetricValue { return m.rejected_cache_full; }},
      {"disk_utilization_pct", [](const M& m) -> MetricValue { return m.disk_utilization_pct; }},
      {"disk_busy_s", [](const M& m) -> MetricValue { return m.disk_busy_s; }},
      {"cache_utilization_pct", [](const M& m) -> MetricValue { return m.cache_utilization_pct; }},
      {"hit_ratio_pct", [](const M& m) -> MetricValue { return m.hit_ratio_pct; }},
      {"cache_hits", [](const M& m) -> MetricValue { return m.cache_hits; }},
      {"cache_lookups", [](const M& m) -> MetricValue { return m.cache_lookups; }},
      {"continuity_violations", [](const M& m) -> MetricValue { return m.continuity_violations; }},
      {"deadline_misses", [](const M& m) -> MetricValue { return m.deadline_misses; }},
      {"startup_deadline_violations", [](const M& m) -> MetricValue { return m.startup_deadline_violations; }},
      {"mean_startup_delay_s", [](const M& m) -> MetricValue { return m.mean_startup_delay_s; }},
      {"concurrent_users_mean", [](const M& m) -> MetricValue { return m.concurrent_users_mean; }},
      {"cache_users_mean", [](const M& m) -> MetricValue { return m.cache_users_mean; }},
      {"cache_arrival_rate", [](const M& m) -> MetricValue { return m.cache_arrival_rate; }},
      {"cache_mean_service_s", [](const M& m) -> MetricValue { return m.cache_mean_service_s; }},
      {"littles_law_predicted_Nc", [](const M& m) -> MetricValue { return m.littles_law_predicted_Nc; }},
      {"channels_started", [](const M& m) -> MetricValue { return m.channels_started; }},
      {"mean_batch_size", [](const M& m) -> MetricValue { return m.mean_batch_size; }},
      {"intervals_allocated", [](const M& m) -> MetricValue { return m.intervals_allocated; }},
  };
  return cols;
}

inline std::string format_value(const MetricValue& v) {
  if (const auto* i = std::get_if<long long>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return format_float(*d);
  return std::get<std::string>(v);
}

// The JSON twin of a CSV cell: integers stay integers, floats are the
// rounded value the CSV shows.
inline Json json_value(const MetricValue& v) {
  if (const auto* i = std::get_if<long long>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return std::stod(format_float(*d));
  return std::get<std::string>(v);
}

// One output row: leading labels (policy, seed, ...) plus the metrics.
struct ReportRow {
  std::vector<std::pair<std::string, std::string>> labels;
  std::vector<MetricValue> values;
};

inline ReportRow make_row(std::vector<std::pair<std::string, std::string>> labels, const MetricsReport& m) {
  ReportRow r;
  r.labels = std::move(labels);
  for (const auto& c : metric_columns()) r.values.push_back(c.get(m));
  return r;
}

// Column-wise mean of several runs; every metric becomes a float.
inline ReportRow mean_row(std::vector<std::pair<std::string, std::string>> labels, const std::vector<MetricsReport>& runs) {
  ReportRow r;
  r.labels = std::move(labels);
  const auto& cols = metric_columns();
  for (const auto& c : cols) {
    double sum = 0;
    for (const auto& m : runs) {
      const auto v = c.get(m);
      sum += std::holds_alternative<long long>(v) ? static_cast<double>(std::get<long long>(v)) : std::get<double>(v);
    }
    r.values.emplace_back(runs.empty() ? 0.0 : sum / static_cast<double>(runs.size()));
  }
  return r;
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Header plus rows, without the timestamp comment.
inline std::string csv_body(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  if (rows.empty()) return "";
  bool first = true;
  for (const auto& [k, v] : rows.front().labels) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  for (const auto& c : metric_columns()) {
    os << (first ? "" : ",") << c.name;
    first = false;
  }
  os << '\n';
  for (const auto& r : rows) {
    first = true;
    for (const auto& [k, v] : r.labels) {
      os << (first ? "" : ",") << v;
      first = false;
    }
    for (const auto& v : r.values) {
      os << (first ? "" : ",") << format_value(v);
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

inline std::string csv_document(const std::vector<ReportRow>& rows, const std::string& stamp) {
  return "# generated " + stamp + "\n" + csv_body(rows);
}

inline Json rows_to_json(const std::vector<ReportRow>& rows) {
  Json arr = Json::array();
  const auto& cols = metric_columns();
  for (const auto& r : rows) {
    Json o = Json::object();
    for (const auto& [k, v] : r.labels) o[k] = v;
    for (std::size_t i = 0; i < cols.size(); ++i) o[cols[i].name] = json_value(r.values[i]);
    arr.push_back(std::move(o));
  }
  return arr;
}

// Runs every configuration, `parallel` at a time. Results come back in
// input order regardless of which run finishes first.
inline std::vector<MetricsReport> run_matrix(const std::vector<SimConfig>& configs, int parallel = 1) {
  std::vector<MetricsReport> out(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        out[i] = run(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, parallel));
  if (n == 1 || configs.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n, configs.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct CompareResult {
  std::vector<ReportRow> rows;  // one per (policy, seed), then one mean row per policy
  std::vector<MetricsReport> runs;
};

inline CompareResult compare(const SimConfig& base, const std::vector<Policy>& policies,
                             const std::vector<std::uint64_t>& seeds, int parallel = 1) {
  if (policies.size() < 2) throw ConfigError("compare needs at least two policies");
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");
  std::vector<SimConfig> configs;
  for (Policy p : policies)
    for (auto s : seeds) {
      SimConfig c = base;
      c.policy = p;
      c.seed = s;
      configs.push_back(c);
    }
  CompareResult res;
  res.runs = run_matrix(configs, parallel);
  for (std::size_t i = 0; i < configs.size(); ++i)
    res.rows.push_back(make_row({{"policy", res.runs[i].policy}, {"seed", std::to_string(res.runs[i].seed)}}, res.runs[i]));
  for (std::size_t p = 0; p < policies.size(); ++p) {
    std::vector<MetricsReport> group(res.runs.begin() + static_cast<long>(p * seeds.size()),
                                     res.runs.begin() + static_cast<long>((p + 1) * seeds.size()));
    res.rows.push_back(mean_row({{"policy", std::string(to_string(policies[p]))}, {"seed", "mean"}}, group));
  }
  return res;
}

// One row per (value, policy, seed).
inline std::vector<ReportRow> sweep(const SimConfig& base, const std::string& key, const std::vector<double>& values,
                                    const std::vector<Policy>& policies, const std::vector<std::uint64_t>& seeds,
                                    int parallel = 1) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  if (!k->numeric) throw ConfigError("config key '" + key + "' is not numeric");
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (policies.empty()) throw ConfigError("sweep needs at least one policy");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  std::vector<SimConfig> configs;
  std::vector<std::string> labels;
  for (double v : values)
    for (Policy p : policies)
      for (auto s : seeds) {
        SimConfig c = base;
        k->set(c, Json(v));
        c.policy = p;
        c.seed = s;
        c.validate();
        configs.push_back(c);
        labels.push_back(format_float(v));
      }
  const auto runs = run_matrix(configs, parallel);
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i)
    rows.push_back(make_row({{"parameter", k->dotted()},
                             {"parameter_value", labels[i]},
                             {"policy", runs[i].policy},
                             {"seed", std::to_string(runs[i].seed)}},
                            runs[i]));
  return rows;
}

// Session profiles as CSV: one line per member of every channel.
inline std::string sessions_csv(const std::vector<SessionProfile>& profiles) {
  std::ostringstream os;
  os << "channel_id,movie,client_id,start_time,establishment_time,expiration_time\n";
  for (const auto& p : profiles)
    for (const auto& m : p.members)
      os << p.channel_id << ',' << p.movie << ',' << m.client_id << ',' << format_float(m.start_time) << ','
         << format_float(m.establishment_time) << ',' << format_float(p.expiration_time) << '\n';
  return os.str();
}

inline std::string cache_events_csv(const std::vector<CacheEvent>& events) {
  std::ostringstream os;
  os << "time,event,video_id,block_index\n";
  for (const auto& e : events)
    os << format_float(e.time) << ',' << to_string(e.kind) << ',' << e.video_id << ',' << e.block_index << '\n';
  return os.str();
}

// Plain-text table of selected columns for the terminal.
inline void print_summary(std::ostream& os, const std::vector<ReportRow>& rows) {
  static const std::vector<std::string> shown = {"videos_streamed", "rejected", "disk_utilization_pct",
                                                 "hit_ratio_pct", "continuity_violations", "mean_startup_delay_s"};
  if (rows.empty()) return;
  const auto& cols = metric_columns();
  std::vector<std::size_t> idx;
  for (const auto& name : shown)
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (name == cols[i].name) idx.push_back(i);
  for (const auto& [k, v] : rows.front().labels) os << std::left << std::setw(k == "policy" ? 22 : 10) << k;
  for (auto i : idx) os << std::right << std::setw(std::max<int>(12, static_cast<int>(std::string(cols[i].name).size()) + 2)) << cols[i].name;
  os << '\n';
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.labels) os << std::left << std::setw(k == "policy" ? 22 : 10) << v;
    for (auto i : idx)
      os << std::right << std::setw(std::max<int>(12, static_cast<int>(std::string(cols[i].name).size()) + 2))
         << format_value(r.values[i]);
    os << '\n';
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

// report.csv and report.json for a set of rows.
inline void write_reports(const std::filesystem::path& dir, const std::vector<ReportRow>& rows, const Json& meta) {
  std::filesystem::create_directories(dir);
  const std::string stamp = timestamp_utc();
  write_text_file(dir / "report.csv", csv_document(rows, stamp));
  Json j = meta;
  j["generated"] = stamp;
  j["rows"] = rows_to_json(rows);
  write_text_file(dir / "report.json", j.dump(2) + "\n");
}

}  // namespace vodsim
