#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vodsim/report.hpp"

using namespace vodsim;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr
};

CliResult cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(VODSIM_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Data rows of a report.csv: skips the timestamp comment and the header.
std::vector<std::string> csv_rows(const fs::path& p) {
  std::vector<std::string> rows;
  std::istringstream in(slurp(p));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (n++ == 0) continue;
    rows.push_back(line);
  }
  return rows;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string t;
  while (std::getline(ss, t, ',')) out.push_back(t);
  return out;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("vodsim_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  [[nodiscard]] const fs::path& path() const { return path_; }
  [[nodiscard]] std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

// A short run keeps the CLI tests fast.
fs::path write_short_config(const TempDir& d, double interarrival = 20.0) {
  const auto p = d.path() / "short.json";
  std::ofstream(p) << R"({"sim": {"duration_s": 1200, "warmup_s": 200},
  "workload": {"mean_interarrival_s": )"
                   << interarrival << "}}\n";
  return p;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = config_from_string("  \n");
  EXPECT_EQ(c.duration_s, SimConfig{}.duration_s);
  EXPECT_EQ(config_to_json(config_from_string("{}")), config_to_json(SimConfig{}));
}

TEST(Config, RoundTripThroughJson) {
  SimConfig c;
  c.seed = 42;
  c.policy = Policy::pic;
  c.disk.alpha = 0.6;
  c.cache.prefix_priority = false;
  c.workload.early_termination_enabled = true;
  c.admission.statistical_window = 50;
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(config_from_json(j).policy, Policy::pic);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    config_from_string(R"({"disk": {"alhpa": 0.7}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("disk.alhpa"), std::string::npos);
  }
  EXPECT_THROW(config_from_string(R"({"network": {}})"), ConfigError);
  EXPECT_THROW(config_from_string(R"({"disk": {"alpha": "high"}})"), ConfigError);
  EXPECT_THROW(config_from_string(R"({"workload": {"total_videos": 1.5}})"), ConfigError);
  EXPECT_THROW(config_from_string(R"({"sim": {"policy": "lru"}})"), ConfigError);
  EXPECT_THROW(config_from_string("{"), ConfigError);
}

TEST(Config, InvalidValueRejected) {
  EXPECT_THROW(config_from_string(R"({"disk": {"alpha": 1.5}})"), ConfigError);
  EXPECT_THROW(config_from_string(R"({"workload": {"total_videos": 0}})"), ConfigError);
}

TEST(Config, BareAndDottedKeys) {
  ASSERT_NE(find_config_key("alpha"), nullptr);
  EXPECT_EQ(find_config_key("alpha")->dotted(), "disk.alpha");
  EXPECT_EQ(find_config_key("workload.mean_interarrival_s")->dotted(), "workload.mean_interarrival_s");
  EXPECT_EQ(find_config_key("nope"), nullptr);
  SimConfig c;
  apply_config_value(c, "mean_interarrival_s", 30.0);
  EXPECT_EQ(c.workload.mean_interarrival_s, 30.0);
  EXPECT_THROW(apply_config_value(c, "nope", 1), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/cfg.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
  }
}

TEST(Report, CsvAndJsonAgree) {
  SimConfig c;
  c.duration_s = 1200;
  c.warmup_s = 200;
  const auto m = run(c);
  const std::vector<ReportRow> rows = {make_row({{"policy", m.policy}, {"seed", "1"}}, m)};
  const auto body = csv_body(rows);
  const auto j = rows_to_json(rows);
  std::istringstream in(body);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  const auto names = split(header);
  const auto cells = split(line);
  ASSERT_EQ(names.size(), cells.size());
  ASSERT_EQ(names.size(), 2 + metric_columns().size());
  for (std::size_t i = 2; i < names.size(); ++i) EXPECT_DOUBLE_EQ(j[0][names[i]].get<double>(), std::stod(cells[i])) << names[i];
  EXPECT_EQ(csv_document(rows, "X").rfind("# generated X\n", 0), 0u);
}

TEST(Report, MeanRowAverages) {
  MetricsReport a, b;
  a.requests = 10;
  b.requests = 20;
  a.hit_ratio_pct = 50;
  b.hit_ratio_pct = 60;
  const auto r = mean_row({{"policy", "x"}}, {a, b});
  EXPECT_DOUBLE_EQ(std::get<double>(r.values[0]), 15.0);
  EXPECT_DOUBLE_EQ(std::get<double>(r.values[11]), 55.0);
}

TEST(Report, CompareAndSweepCounts) {
  SimConfig c;
  c.duration_s = 800;
  c.warmup_s = 100;
  const auto res = compare(c, {Policy::deterministic, Policy::statistical, Policy::prefix_pic_multicast}, {1, 2, 3, 4, 5});
  EXPECT_EQ(res.rows.size(), 18u);
  EXPECT_EQ(res.rows[15].labels[1].second, "mean");
  EXPECT_THROW(compare(c, {Policy::pic}, {1}), ConfigError);
  EXPECT_EQ(sweep(c, "mean_interarrival_s", {30, 60, 120}, {Policy::pic, Policy::deterministic}, {1, 2, 3}).size(), 18u);
  EXPECT_THROW(sweep(c, "alpha", {}, {Policy::pic}, {1}), ConfigError);
  EXPECT_THROW(sweep(c, "nope", {1}, {Policy::pic}, {1}), ConfigError);
  EXPECT_THROW(sweep(c, "policy", {1}, {Policy::pic}, {1}), ConfigError);
}

TEST(Cli, RunWritesTwoFiles) {
  TempDir d;
  const auto cfg = write_short_config(d);
  const auto r = cli("run --config " + cfg.string() + " --out " + d.str());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(d.path() / "report.csv"));
  EXPECT_TRUE(fs::exists(d.path() / "report.json"));
  EXPECT_FALSE(fs::exists(d.path() / "cache-events.csv"));
  EXPECT_EQ(csv_rows(d.path() / "report.csv").size(), 1u);
  const auto j = Json::parse(slurp(d.path() / "report.json"));
  EXPECT_EQ(j["rows"].size(), 1u);
}

TEST(Cli, SeedOverrideAndOptionalFiles) {
  TempDir d;
  const auto cfg = write_short_config(d);
  const auto r = cli("run --config " + cfg.string() + " --seed 77 --policy pic --cache-events --sessions --out " + d.str());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto rows = csv_rows(d.path() / "report.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(split(rows[0])[0], "pic");
  EXPECT_EQ(split(rows[0])[1], "77");
  EXPECT_TRUE(fs::exists(d.path() / "cache-events.csv"));
  EXPECT_TRUE(fs::exists(d.path() / "sessions.csv"));
  const auto j = Json::parse(slurp(d.path() / "report.json"));
  EXPECT_EQ(j["config"]["sim"]["seed"], 77);
}

TEST(Cli, OutputDirFromEnvironment) {
  TempDir d;
  const auto cfg = write_short_config(d);
  const auto out = d.path() / "envout";
  fs::create_directories(out);
  const auto r = cli("run --config " + cfg.string(), "VODSIM_OUT_DIR=" + out.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "report.csv"));
}

TEST(Cli, MissingConfigNamesPath) {
  TempDir d;
  const auto r = cli("run --config /nonexistent/x.json --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("/nonexistent/x.json"), std::string::npos);
}

TEST(Cli, BadKeyInConfigNamed) {
  TempDir d;
  const auto p = d.path() / "bad.json";
  std::ofstream(p) << R"({"cache": {"capacity": 10}})";
  const auto r = cli("run --config " + p.string() + " --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("cache.capacity"), std::string::npos);
}

TEST(Cli, CompareRowCounts) {
  TempDir d;
  const auto cfg = write_short_config(d);
  const auto r = cli("compare --config " + cfg.string() +
                     " --policies deterministic,statistical,prefix-pic-multicast --seeds 1..5 --out " + d.str());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto rows = csv_rows(d.path() / "report.csv");
  ASSERT_EQ(rows.size(), 18u);
  int means = 0;
  for (const auto& row : rows) means += split(row)[1] == "mean";
  EXPECT_EQ(means, 3);
}

TEST(Cli, CompareErrors) {
  TempDir d;
  const auto cfg = write_short_config(d);
  auto r = cli("compare --config " + cfg.string() + " --policies pic,lru --seeds 1 --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
  for (std::string_view name : kPolicyNames) EXPECT_NE(r.output.find(name), std::string::npos) << name;
  r = cli("compare --config " + cfg.string() + " --policies pic --seeds 1 --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
  r = cli("compare --config " + cfg.string() + " --policies pic,deterministic --seeds 1,1 --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
}

TEST(Cli, SweepRowCountsAndErrors) {
  TempDir d;
  const auto cfg = write_short_config(d);
  auto r = cli("sweep --config " + cfg.string() +
               " --param mean_interarrival_s --values 30,60,120 --policies pic,prefix-pic-multicast --seeds 1,2,3 --out " +
               d.str());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(csv_rows(d.path() / "report.csv").size(), 18u);
  r = cli("sweep --config " + cfg.string() + " --param alpha --values , --policies pic --seeds 1 --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
  r = cli("sweep --config " + cfg.string() + " --param no_such_key --values 1 --policies pic --seeds 1 --out " + d.str());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("no_such_key"), std::string::npos);
}

TEST(Cli, AlphaSweepDeterministicAdmitsMoreAtHigherAlpha) {
  TempDir d;
  const auto cfg = write_short_config(d, 1.0);
  const auto r = cli("sweep --config " + cfg.string() + " --param alpha --values 0.6,0.8 --policies deterministic --seeds 1,2,3 --out " +
                     d.str());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto rows = csv_rows(d.path() / "report.csv");
  ASSERT_EQ(rows.size(), 6u);
  // columns: parameter, parameter_value, policy, seed, requests, admitted, ...
  for (int s = 0; s < 3; ++s) {
    const auto lo = split(rows[static_cast<std::size_t>(s)]);
    const auto hi = split(rows[static_cast<std::size_t>(s + 3)]);
    ASSERT_EQ(lo[1], "0.6");
    ASSERT_EQ(hi[1], "0.8");
    EXPECT_EQ(lo[4], hi[4]);                     // same arrivals
    EXPECT_GT(std::stoll(hi[5]), std::stoll(lo[5]));  // more admitted
  }
}

TEST(Cli, NoSubcommandIsError) { EXPECT_NE(cli("").exit_code, 0); }
