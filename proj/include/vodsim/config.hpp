#pragma once

// JSON run configuration.
//
// The file mirrors SimConfig: sections workload, disk, cache, multicast,
// admission and sim. Every key is optional; an empty file (or "{}") gives
// the default setup. Unknown sections or keys are errors that name the key.

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vodsim/engine.hpp"
#include "vodsim/errors.hpp"

namespace vodsim {

using Json = nlohmann::json;

struct ConfigKey {
  std::string section;
  std::string name;
  bool numeric = true;  // sweepable
  std::function<void(SimConfig&, const Json&)> set;
  std::function<Json(const SimConfig&)> get;

  [[nodiscard]] std::string dotted() const { return section + "." + name; }
};

namespace detail {

template <class T>
T json_as(const Json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number()) throw ConfigError("");
      const double d = v.get<double>();
      if (d != static_cast<double>(static_cast<long long>(d))) throw ConfigError("");
      return static_cast<T>(d);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
      return v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError("");
      return v.get<T>();
    }
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

template <class T, class Section>
ConfigKey field(std::string section, std::string name, Section SimConfig::*sec, T Section::*member) {
  const std::string dotted = section + "." + name;
  ConfigKey k;
  k.section = section;
  k.name = name;
  k.numeric = std::is_arithmetic_v<T> && !std::is_same_v<T, bool>;
  k.set = [sec, member, dotted](SimConfig& c, const Json& v) { (c.*sec).*member = json_as<T>(v, dotted); };
  k.get = [sec, member](const SimConfig& c) { return Json((c.*sec).*member); };
  return k;
}

template <class T>
ConfigKey sim_field(std::string name, T SimConfig::*member) {
  const std::string dotted = "sim." + name;
  ConfigKey k;
  k.section = "sim";
  k.name = name;
  k.numeric = std::is_arithmetic_v<T> && !std::is_same_v<T, bool>;
  k.set = [member, dotted](SimConfig& c, const Json& v) { c.*member = json_as<T>(v, dotted); };
  k.get = [member](const SimConfig& c) { return Json(c.*member); };
  return k;
}

}  // namespace detail

inline const std::vector<ConfigKey>& config_keys() {
  using detail::field;
  using detail::sim_field;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    const auto W = &SimConfig::workload;
    k.push_back(field("workload", "total_videos", W, &WorkloadConfig::total_videos));
    k.push_back(field("workload", "mean_interarrival_s", W, &WorkloadConfig::mean_interarrival_s));
    k.push_back(field("workload", "zipf_theta", W, &WorkloadConfig::zipf_theta));
    k.push_back(field("workload", "mean_length_blocks", W, &WorkloadConfig::mean_length_blocks));
    k.push_back(field("workload", "min_length_blocks", W, &WorkloadConfig::min_length_blocks));
    k.push_back(field("workload", "client_bit_rate_bps", W, &WorkloadConfig::client_bit_rate_bps));
    k.push_back(field("workload", "startup_tolerance_s", W, &WorkloadConfig::startup_tolerance_s));
    k.push_back(field("workload", "prefix_strand_fraction", W, &WorkloadConfig::prefix_strand_fraction));
    k.push_back(field("workload", "early_termination_enabled", W, &WorkloadConfig::early_termination_enabled));
    k.push_back(field("workload", "early_termination_prob", W, &WorkloadConfig::early_termination_prob));
    k.push_back(field("workload", "early_termination_extra_fraction", W, &WorkloadConfig::early_termination_extra_fraction));
    const auto D = &SimConfig::disk;
    k.push_back(field("disk", "bandwidth_Bps", D, &DiskParams::bandwidth_Bps));
    k.push_back(field("disk", "t_seek_s", D, &DiskParams::t_seek_s));
    k.push_back(field("disk", "t_rot_s", D, &DiskParams::t_rot_s));
    k.push_back(field("disk", "alpha", D, &DiskParams::alpha));
    k.push_back(field("disk", "frames_per_block", D, &DiskParams::frames_per_block));
    k.push_back(field("disk", "frame_size_bytes", D, &DiskParams::frame_size_bytes));
    k.push_back(field("disk", "literal_overhead_form", D, &DiskParams::literal_overhead_form));
    const auto C = &SimConfig::cache;
    k.push_back(field("cache", "capacity_blocks", C, &CacheConfig::capacity_blocks));
    k.push_back(field("cache", "prefix_fraction", C, &CacheConfig::prefix_fraction));
    k.push_back(field("cache", "cache_bandwidth_Bps", C, &CacheConfig::cache_bandwidth_Bps));
    k.push_back(field("cache", "popularity_half_life_s", C, &CacheConfig::popularity_half_life_s));
    k.push_back(field("cache", "popularity_refresh_s", C, &CacheConfig::popularity_refresh_s));
    k.push_back(field("cache", "prefix_priority", C, &CacheConfig::prefix_priority));
    const auto M = &SimConfig::multicast;
    k.push_back(field("multicast", "max_batch_window_s", M, &MulticastConfig::max_batch_window_s));
    k.push_back(field("multicast", "prefetch_lead_rounds", M, &MulticastConfig::prefetch_lead_rounds));
    k.push_back(field("multicast", "commit_suffix_at_open", M, &MulticastConfig::commit_suffix_at_open));
    const auto A = &SimConfig::admission;
    k.push_back(field("admission", "statistical_window", A, &AdmissionConfig::statistical_window));
    k.push_back(field("admission", "statistical_epsilon", A, &AdmissionConfig::statistical_epsilon));
    k.push_back(sim_field("duration_s", &SimConfig::duration_s));
    k.push_back(sim_field("warmup_s", &SimConfig::warmup_s));
    k.push_back(sim_field("seed", &SimConfig::seed));
    k.push_back(sim_field("network_capacity_bps", &SimConfig::network_capacity_bps));
    k.push_back(sim_field("audit", &SimConfig::audit));
    ConfigKey policy;
    policy.section = "sim";
    policy.name = "policy";
    policy.numeric = false;
    policy.set = [](SimConfig& c, const Json& v) {
      const auto name = detail::json_as<std::string>(v, "sim.policy");
      const auto p = parse_policy(name);
      if (!p) throw ConfigError("config key 'sim.policy': unknown policy '" + name + "'");
      c.policy = *p;
    };
    policy.get = [](const SimConfig& c) { return Json(std::string(to_string(c.policy))); };
    k.push_back(std::move(policy));
    return k;
  }();
  return keys;
}

// Resolves "section.name" or a bare name that is unique across sections.
inline const ConfigKey* find_config_key(const std::string& key) {
  const ConfigKey* found = nullptr;
  for (const auto& k : config_keys()) {
    if (k.dotted() == key) return &k;
    if (k.name == key) {
      if (found) throw ConfigError("config key '" + key + "' is ambiguous; use section.name");
      found = &k;
    }
  }
  return found;
}

inline void apply_config_value(SimConfig& c, const std::string& key, const Json& value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  k->set(c, value);
}

inline SimConfig config_from_json(const Json& j) {
  SimConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::vector<std::string> sections = {"workload", "disk", "cache", "multicast", "admission", "sim"};
  for (const auto& [section, body] : j.items()) {
    if (std::find(sections.begin(), sections.end(), section) == sections.end())
      throw ConfigError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [name, value] : body.items()) {
      const std::string dotted = section + "." + name;
      const ConfigKey* k = nullptr;
      for (const auto& cand : config_keys())
        if (cand.dotted() == dotted) k = &cand;
      if (!k) throw ConfigError("unknown config key '" + dotted + "'");
      k->set(c, value);
    }
  }
  c.validate();
  return c;
}

inline SimConfig config_from_string(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return SimConfig{};
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_string(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline Json config_to_json(const SimConfig& c) {
  Json j = Json::object();
  for (const auto& k : config_keys()) j[k.section][k.name] = k.get(c);
  return j;
}

}  // namespace vodsim
