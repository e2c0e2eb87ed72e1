#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "../common/golden.h"
#include "cli.h"
#include "json.hpp"
#include "topicmatch/io.h"

using namespace topicmatch;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("topicmatch_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::set<std::string> hashes_under(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).string() + ":" + sha256_file(e.path()));
  }
  return out;
}

const char* kTinyConfig = R"({
  "schema_version": 1,
  "model": {"widths": [8, 12, 16], "num_topics": 4, "k_covis": 2},
  "data": {"width": 32, "height": 32}
})";

// A small dataset plus a one-epoch plus-variant checkpoint shared by several tests.
class CliFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fresh("shared");
    std::ofstream(root_ / "tiny.json") << kTinyConfig;
    ASSERT_EQ(run({"-q", "gen-data", "--n", "10", "--out", (root_ / "data").string(), "--seed", "3",
                   "--config", (root_ / "tiny.json").string()})
                  .code,
              0);
    ASSERT_EQ(run({"-q", "train", "--data", (root_ / "data").string(), "--out", (root_ / "run").string(),
                   "--variant", "plus", "--epochs", "2", "--config", (root_ / "tiny.json").string()})
                  .code,
              0);
  }
  static fs::path root_;
};
fs::path CliFixture::root_;

}  // namespace

TEST(Cli, HelpExitsZeroWithoutSideEffects) {
  const fs::path cwd = fresh("help");
  const fs::path old = fs::current_path();
  fs::current_path(cwd);
  for (const char* sub : {"gen-data", "train", "match", "eval", "profile", "viz-topics", "covis-sweep"}) {
    const Result r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
  EXPECT_EQ(run({"--help"}).code, 0);
  fs::current_path(old);
  EXPECT_TRUE(fs::is_empty(cwd));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"train", "--out", fresh("nodata").string()}).code, 2);
  const Result r = run({"gen-data", "--n", "0", "--out", fresh("n0").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("n must be positive"), std::string::npos);
}

TEST(Cli, GenDataIsDeterministicAndWritesOnlyUnderOut) {
  const fs::path cwd = fresh("gen");
  const fs::path old = fs::current_path();
  fs::current_path(cwd);
  EXPECT_EQ(run({"-q", "gen-data", "--n", "10", "--out", "d1", "--seed", "7", "--dims", "32x32"}).code, 0);
  EXPECT_EQ(run({"-q", "gen-data", "--n", "10", "--out", "d2", "--seed", "7", "--dims", "32x32"}).code, 0);
  fs::current_path(old);
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(cwd)) top.insert(e.path().filename().string());
  EXPECT_EQ(top, (std::set<std::string>{"d1", "d2"}));
  EXPECT_EQ(hashes_under(cwd / "d1"), hashes_under(cwd / "d2"));
  const json manifest = json::parse(slurp(cwd / "d1" / "manifest.json"));
  EXPECT_EQ(manifest["pairs"].size(), 10u);
}

TEST(Cli, ConfigFileRejectsUnknownKeysAndFlagsWin) {
  const fs::path dir = fresh("cfg");
  std::ofstream(dir / "bad.json") << R"({"schema_version": 1, "model": {"widht": 3}})";
  std::ofstream(dir / "bad_section.json") << R"({"modle": {}})";
  std::ofstream(dir / "bad_version.json") << R"({"schema_version": 9})";
  for (const char* f : {"bad.json", "bad_section.json", "bad_version.json"}) {
    EXPECT_EQ(run({"gen-data", "--n", "1", "--out", (dir / "x").string(), "--config", (dir / f).string()}).code, 2) << f;
  }
  std::ofstream(dir / "dims.json") << R"({"data": {"width": 48, "height": 40}})";
  ASSERT_EQ(run({"-q", "gen-data", "--n", "1", "--out", (dir / "file").string(), "--config", (dir / "dims.json").string()}).code, 0);
  EXPECT_EQ(json::parse(slurp(dir / "file" / "manifest.json"))["generator"]["width"], 48);
  ASSERT_EQ(run({"-q", "gen-data", "--n", "1", "--out", (dir / "flag").string(), "--config",
                 (dir / "dims.json").string(), "--dims", "32x24"})
                .code,
            0);
  const json m = json::parse(slurp(dir / "flag" / "manifest.json"));
  EXPECT_EQ(m["generator"]["width"], 32);
  EXPECT_EQ(m["generator"]["height"], 24);
}

TEST_F(CliFixture, TrainWritesCheckpointAndReport) {
  EXPECT_TRUE(fs::exists(root_ / "run" / "model.tmck"));
  std::ifstream report(root_ / "run" / "train_report.jsonl");
  int lines = 0;
  for (std::string line; std::getline(report, line);) {
    EXPECT_EQ(json::parse(line)["variant"], "plus");
    ++lines;
  }
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(json::parse(slurp(root_ / "run" / "config.json"))["model"]["variant"], "plus");
}

TEST_F(CliFixture, MatchThresholdAndVisualization) {
  const fs::path out = fresh("match");
  const fs::path img = root_ / "data" / "images";
  std::vector<fs::path> pgms;
  for (const auto& e : fs::directory_iterator(img)) pgms.push_back(e.path());
  std::sort(pgms.begin(), pgms.end());
  ASSERT_GE(pgms.size(), 2u);
  const std::string ckpt = (root_ / "run" / "model.tmck").string();
  ASSERT_EQ(run({"-q", "match", pgms[0].string(), pgms[1].string(), "--checkpoint", ckpt, "--out",
                 out.string(), "--tau", "1.0", "--viz", "viz.ppm"})
                .code,
            0);
  EXPECT_EQ(slurp(out / "matches.csv"), "xa,ya,xb,yb,conf\n");
  const RgbImage viz = read_ppm(out / "viz.ppm");
  EXPECT_EQ(viz.width, 64);
  EXPECT_EQ(viz.height, 32);

  std::ofstream(out / "junk.pgm") << "not an image";
  EXPECT_EQ(run({"match", (out / "junk.pgm").string(), pgms[1].string(), "--checkpoint", ckpt, "--out", out.string()}).code, 3);
  EXPECT_EQ(run({"match", pgms[0].string(), pgms[1].string(), "--checkpoint", (out / "none.tmck").string(), "--out", out.string()}).code, 3);
}

TEST_F(CliFixture, EvalOracleProfileVizAndSweep) {
  const fs::path out = fresh("eval");
  ASSERT_EQ(run({"-q", "eval", "--data", (root_ / "data").string(), "--oracle", "--out", (out / "ev").string()}).code, 0);
  const json rep = json::parse(slurp(out / "ev" / "eval_report.json"));
  EXPECT_GT(rep["auc"]["@3px"].get<double>(), 0.99);

  const std::string ckpt = (root_ / "run" / "model.tmck").string();
  ASSERT_EQ(run({"-q", "eval", "--data", (root_ / "data").string(), "--checkpoint", ckpt, "--out", (out / "ev2").string()}).code, 0);
  EXPECT_TRUE(fs::exists(out / "ev2" / "eval_report.json"));

  ASSERT_EQ(run({"-q", "viz-topics", "--checkpoint", ckpt, "--data", (root_ / "data").string(), "--out", (out / "viz").string()}).code, 0);
  for (const char* f : {"topics_a.ppm", "topics_b.ppm", "palette.json"}) EXPECT_TRUE(fs::exists(out / "viz" / f)) << f;

  ASSERT_EQ(run({"-q", "covis-sweep", "--checkpoint", ckpt, "--data", (root_ / "data").string(), "--out",
                 (out / "sweep").string(), "--k", "1,2,4"})
                .code,
            0);
  std::ifstream sweep(out / "sweep" / "covis_sweep.csv");
  int rows = 0;
  for (std::string line; std::getline(sweep, line);) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(run({"covis-sweep", "--checkpoint", ckpt, "--data", (root_ / "data").string(), "--out",
                 (out / "sweep0").string(), "--k", "0"})
                .code,
            2);
}

TEST(Cli, ProfileRowsSumToTotal) {
  const fs::path out = fresh("profile");
  ASSERT_EQ(run({"-q", "profile", "--out", out.string(), "--height", "256", "--width", "256", "--num-topics", "100"}).code, 0);
  std::ifstream csv(out / "profile.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "variant,stage,macs");
  std::map<std::string, unsigned long long> sum, total;
  while (std::getline(csv, line)) {
    std::stringstream s(line);
    std::string variant, stage, macs;
    std::getline(s, variant, ',');
    std::getline(s, stage, ',');
    std::getline(s, macs, ',');
    if (stage == "total") {
      total[variant] = std::stoull(macs);
    } else {
      sum[variant] += std::stoull(macs);
    }
  }
  ASSERT_EQ(total.size(), 2u);
  for (const auto& [v, t] : total) EXPECT_EQ(sum[v], t) << v;
  EXPECT_NE(total["fast"], total["plus"]);
}

TEST(Cli, ProfileInstrumentedMatchesAnalytic) {
  const fs::path out = fresh("profile_instr");
  const fs::path cfg = out / "tiny.json";
  std::ofstream(cfg) << kTinyConfig;
  ASSERT_EQ(run({"-q", "profile", "--out", out.string(), "--height", "32", "--width", "48", "--instrumented", "--config", cfg.string()}).code, 0);
  std::ifstream csv(out / "profile.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "variant,stage,macs,instrumented_macs");
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto a = line.rfind(','), b = line.rfind(',', a - 1);
    EXPECT_EQ(line.substr(b + 1, a - b - 1), line.substr(a + 1)) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 14);
}

TEST(Cli, MatchCsvMatchesGoldenFile) {
  const golden::GoldenRun r = golden::run_golden_match(fresh("golden"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  if (golden::update_requested()) {
    std::ofstream(golden::golden_file(), std::ios::binary) << r.csv;
  }
  const std::string expected = slurp(golden::golden_file());
  ASSERT_FALSE(expected.empty()) << "missing " << golden::golden_file();
  EXPECT_EQ(r.csv, expected);
  EXPECT_GT(std::count(r.csv.begin(), r.csv.end(), '\n'), 1);
}
