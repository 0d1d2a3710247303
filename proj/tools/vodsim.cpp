// vodsim: run, compare and sweep video-server simulations.
//
//   vodsim run     --config cfg.json [--seed N] [--policy NAME] [--out DIR]
//   vodsim compare --config cfg.json --policies a,b[,c] --seeds 1..10 [--parallel N]
//   vodsim sweep   --config cfg.json --param KEY --values 30,60,120 --policies a,b --seeds 1,2,3
//
// Output goes to --out, else $VODSIM_OUT_DIR, else the current directory.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vodsim/vodsim.hpp"

namespace fs = std::filesystem;
using namespace vodsim;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string policy_list() {
  std::string s;
  for (auto n : kPolicyNames) s += (s.empty() ? "" : ", ") + std::string(n);
  return s;
}

Policy policy_or_throw(const std::string& name) {
  const auto p = parse_policy(name);
  if (!p) throw ConfigError("unknown policy '" + name + "'; valid policies: " + policy_list());
  return *p;
}

std::vector<Policy> parse_policies(const std::string& s) {
  std::vector<Policy> out;
  for (const auto& n : split(s, ',')) out.push_back(policy_or_throw(n));
  return out;
}

std::uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw ConfigError("not a seed: '" + s + "'");
  return v;
}

// "1,2,3" or "1..10"
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  try {
    if (const auto dots = s.find(".."); dots != std::string::npos) {
      const auto a = parse_u64(s.substr(0, dots));
      const auto b = parse_u64(s.substr(dots + 2));
      if (b < a) throw ConfigError("empty seed range '" + s + "'");
      for (auto v = a; v <= b; ++v) out.push_back(v);
    } else {
      for (const auto& t : split(s, ',')) out.push_back(parse_u64(t));
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError("cannot parse seeds '" + s + "'");
  }
  std::vector<std::uint64_t> sorted = out;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("seeds must be unique");
  return out;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split(s, ',')) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != t.size() || t.empty()) throw ConfigError("not a number: '" + t + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--values needs at least one value");
  return out;
}

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("VODSIM_OUT_DIR"); env && *env) return env;
  return ".";
}

SimConfig base_config(const std::string& path) { return path.empty() ? SimConfig{} : load_config(path); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-event simulator of a multicast video-on-demand server"};
  app.require_subcommand(1);

  std::string config_path, out, policy, policies, seeds = "1..10", param, values;
  std::uint64_t seed = 0;
  int parallel = 1;
  bool cache_events = false, sessions = false;

  auto* run_cmd = app.add_subcommand("run", "run one simulation");
  run_cmd->add_option("--config", config_path, "JSON configuration file");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "random seed (overrides the file)");
  run_cmd->add_option("--policy", policy, "admission policy: " + policy_list());
  run_cmd->add_option("--out", out, "output directory");
  run_cmd->add_flag("--cache-events", cache_events, "also write cache-events.csv");
  run_cmd->add_flag("--sessions", sessions, "also write sessions.csv");

  auto* cmp_cmd = app.add_subcommand("compare", "compare policies over seeds");
  cmp_cmd->add_option("--config", config_path, "JSON configuration file");
  cmp_cmd->add_option("--policies", policies, "comma-separated policies (at least two)")->required();
  cmp_cmd->add_option("--seeds", seeds, "seed list '1,2,3' or range '1..10'");
  cmp_cmd->add_option("--out", out, "output directory");
  cmp_cmd->add_option("--parallel", parallel, "concurrent runs")->check(CLI::PositiveNumber);

  auto* sw_cmd = app.add_subcommand("sweep", "vary one numeric config key");
  sw_cmd->add_option("--config", config_path, "JSON configuration file");
  sw_cmd->add_option("--param", param, "config key, e.g. workload.mean_interarrival_s or alpha")->required();
  sw_cmd->add_option("--values", values, "comma-separated values")->required();
  sw_cmd->add_option("--policies", policies, "comma-separated policies")->required();
  sw_cmd->add_option("--seeds", seeds, "seed list '1,2,3' or range '1..10'");
  sw_cmd->add_option("--out", out, "output directory");
  sw_cmd->add_option("--parallel", parallel, "concurrent runs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    SimConfig base = base_config(config_path);
    const fs::path dir = output_dir(out);

    if (*run_cmd) {
      if (*seed_opt) base.seed = seed;
      if (!policy.empty()) base.policy = policy_or_throw(policy);
      base.record_cache_events = cache_events;
      base.validate();
      Simulator sim(base);
      const MetricsReport m = sim.run();
      const std::vector<ReportRow> rows = {make_row({{"policy", m.policy}, {"seed", std::to_string(m.seed)}}, m)};
      Json meta;
      meta["command"] = "run";
      meta["config"] = config_to_json(base);
      write_reports(dir, rows, meta);
      if (cache_events) write_text_file(dir / "cache-events.csv", cache_events_csv(sim.cache().events()));
      if (sessions) write_text_file(dir / "sessions.csv", sessions_csv(sim.session_profiles()));
      print_summary(std::cout, rows);
      return 0;
    }

    const auto pols = parse_policies(policies);
    const auto seed_list = parse_seeds(seeds);
    if (seed_list.empty()) throw ConfigError("--seeds needs at least one seed");

    if (*cmp_cmd) {
      if (pols.size() < 2) throw ConfigError("compare needs at least two policies; valid policies: " + policy_list());
      const auto res = compare(base, pols, seed_list, parallel);
      Json meta;
      meta["command"] = "compare";
      meta["config"] = config_to_json(base);
      write_reports(dir, res.rows, meta);
      print_summary(std::cout, res.rows);
      return 0;
    }

    const auto rows = sweep(base, param, parse_values(values), pols, seed_list, parallel);
    Json meta;
    meta["command"] = "sweep";
    meta["parameter"] = param;
    meta["config"] = config_to_json(base);
    write_reports(dir, rows, meta);
    print_summary(std::cout, rows);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "vodsim: " << e.what() << '\n';
    return 2;
  }
}
