#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "tvae/failure_forge.hpp"
#include "tvae/trajectory.hpp"

namespace tvae {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tvae-harness");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::temp_dir("cli");
    dataset_ = (dir_ / "d.jsonl").string();
    save_dataset(dataset_, testing::make_dataset(12, 1, 6, 3));
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::string dataset_;
};

TEST_F(CliTest, SimulateOracle) {
  const auto r = run({"simulate", "--agent", "scripted:oracle", "--dataset", dataset_, "--out", out("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(testing::read_file(out("o") + "/report.json"));
  EXPECT_EQ(rep["task"]["tsr"], 1.0);
  EXPECT_EQ(rep["task"]["sim_tsr"], 1.0);
  EXPECT_EQ(rep["task"]["aso"], 0.0);
  EXPECT_EQ(rep["step"]["sr"], 1.0);
  EXPECT_TRUE(fs::exists(out("o") + "/traces.jsonl"));
  const auto m = json::parse(testing::read_file(out("o") + "/manifest.json"));
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["dataset_hash"], file_digest(dataset_));
  EXPECT_TRUE(m["outputs"].contains("report.json"));
}

TEST_F(CliTest, UnreachableAgentExitsTwoWithoutReport) {
  const auto r = run({"simulate", "--agent", "remote:http://127.0.0.1:1/turn", "--timeout", "2", "--dataset",
                      dataset_, "--out", out("u")});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(out("u") + "/report.json"));
  EXPECT_FALSE(fs::exists(out("u") + "/manifest.json"));
}

TEST_F(CliTest, SameSeedSameReports) {
  for (const char* d : {"a", "b"}) {
    const auto r = run({"simulate", "--agent", "scripted:bernoulli:0.5", "--seed", "9", "--replicates", "3",
                        "--dataset", dataset_, "--out", out(d), "--threads", d[0] == 'a' ? "1" : "4"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"report.json", "report.csv", "report.md", "traces.jsonl", "manifest.json"})
    EXPECT_EQ(testing::read_file(out("a") + "/" + f), testing::read_file(out("b") + "/" + f)) << f;
}

TEST_F(CliTest, ManifestRerunIsByteIdentical) {
  ASSERT_EQ(run({"simulate", "--agent", "scripted:bernoulli:0.4", "--seed", "3", "--dataset", dataset_, "--out",
                 out("first")})
                .code,
            0);
  const auto r = run({"simulate", "--config", out("first") + "/manifest.json", "--out", out("second")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"report.json", "report.csv", "report.md", "traces.jsonl", "manifest.json"})
    EXPECT_EQ(testing::read_file(out("first") + "/" + f), testing::read_file(out("second") + "/" + f)) << f;
}

TEST_F(CliTest, ConfigPrecedence) {
  {
    std::ofstream c(out("cfg.json"));
    c << json{{"agent", "scripted:loopy"}, {"seed", 4}, {"dataset", dataset_}, {"budget_multiplier", 3.0}}.dump();
  }
  ASSERT_EQ(run({"simulate", "--config", out("cfg.json"), "--agent", "scripted:oracle", "--out", out("p")}).code, 0);
  const auto m = json::parse(testing::read_file(out("p") + "/manifest.json"));
  EXPECT_EQ(m["config"]["agent"], "scripted:oracle");
  EXPECT_EQ(m["config"]["budget_multiplier"], 3.0);
  EXPECT_EQ(m["seed"], 4);
}

TEST_F(CliTest, EnvSeedFallback) {
  ::setenv("TVAE_SEED", "77", 1);
  const auto r = run({"simulate", "--agent", "scripted:oracle", "--dataset", dataset_, "--out", out("e")});
  ::unsetenv("TVAE_SEED");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(testing::read_file(out("e") + "/manifest.json"))["seed"], 77);
}

TEST_F(CliTest, UnknownConfigKeyIsDataError) {
  {
    std::ofstream c(out("cfg.json"));
    c << R"({"dataset_path": "x"})";
  }
  EXPECT_EQ(run({"simulate", "--config", out("cfg.json"), "--out", out("k")}).code, 1);
}

TEST_F(CliTest, BadDatasetIsDataError) {
  {
    std::ofstream f(out("bad.jsonl"));
    f << "{oops\n";
  }
  const auto r = run({"simulate", "--dataset", out("bad.jsonl"), "--out", out("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST_F(CliTest, LoopyBenchRobust) {
  const auto r = run({"bench-robust", "--agent", "scripted:loopy", "--synthesize", "--dataset", dataset_,
                      "--per-traj", "2", "--seed", "7", "--out", out("l")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(testing::read_file(out("l") + "/report.json"));
  EXPECT_EQ(rep["robustness"]["lr"], 1.0);
  EXPECT_EQ(rep["robustness"]["rsr"], 0.0);
}

TEST_F(CliTest, SynthesizeTwiceIsIdentical) {
  for (const char* d : {"s1", "s2"})
    ASSERT_EQ(run({"bench-robust", "--synthesize", "--dataset", dataset_, "--per-traj", "2", "--seed", "7", "--out",
                   out(d)})
                  .code,
              0);
  EXPECT_EQ(testing::read_file(out("s1") + "/benchmark.jsonl"), testing::read_file(out("s2") + "/benchmark.jsonl"));
}

TEST_F(CliTest, EmptyBenchmarkIsDataError) {
  { std::ofstream f(out("empty.jsonl")); }
  EXPECT_EQ(run({"bench-robust", "--cases", out("empty.jsonl"), "--out", out("eb")}).code, 1);
}

TEST_F(CliTest, SynthAndScore) {
  ASSERT_EQ(run({"synth", "--dataset", dataset_, "--ratio-b", "0.3", "--seed", "1", "--out", out("sy")}).code, 0);
  const auto samples = read_samples(out("sy") + "/sft.jsonl");
  ASSERT_FALSE(samples.empty());
  {
    std::ofstream f(out("outputs.jsonl"));
    for (const auto& s : samples) {
      const std::string text = compose_turn(s.target_action, s.target_verification, s.target_effect, s.history.empty());
      f << json{{"output", text}}.dump() << "\n";
    }
  }
  const auto r = run({"score", "--samples", out("sy") + "/sft.jsonl", "--outputs", out("outputs.jsonl"), "--out",
                      out("sc")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(testing::read_file(out("sc") + "/rewards.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(json::parse(line)["total"], 2.0) << line;
    ++n;
  }
  EXPECT_EQ(n, samples.size());
}

TEST_F(CliTest, ScoreWithGroups) {
  ASSERT_EQ(run({"synth", "--dataset", dataset_, "--ratio-b", "0", "--out", out("sy")}).code, 0);
  {
    std::ofstream f(out("outputs.jsonl"));
    for (int i = 0; i < 2; ++i) f << json{{"output", "no idea"}}.dump() << "\n";
  }
  {
    std::ofstream f(out("samples.jsonl"));
    const auto samples = read_samples(out("sy") + "/sft.jsonl");
    for (int i = 0; i < 2; ++i) f << sample_to_json(samples[static_cast<std::size_t>(i)]).dump() << "\n";
  }
  {
    std::ofstream f(out("groups.jsonl"));
    json g{{"group_id", "g0"},
           {"outputs",
            {{{"sample_index", 0}, {"logp_new", {-1.0}}, {"logp_old", {-1.0}}, {"logp_ref", {-1.0}}},
             {{"sample_index", 1}, {"logp_new", {-2.0}}, {"logp_old", {-2.0}}, {"logp_ref", {-2.0}}}}}};
    f << g.dump() << "\n";
  }
  const auto r = run({"score", "--samples", out("samples.jsonl"), "--outputs", out("outputs.jsonl"), "--groups",
                      out("groups.jsonl"), "--out", out("g")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto obj = json::parse(testing::read_file(out("g") + "/objective.jsonl"));
  EXPECT_EQ(obj["objective"], 0.0);
}

TEST_F(CliTest, MismatchedScoreLengthsIsDataError) {
  ASSERT_EQ(run({"synth", "--dataset", dataset_, "--out", out("sy")}).code, 0);
  {
    std::ofstream f(out("outputs.jsonl"));
    f << json{{"output", "x"}}.dump() << "\n";
  }
  EXPECT_EQ(run({"score", "--samples", out("sy") + "/sft.jsonl", "--outputs", out("outputs.jsonl"), "--out",
                 out("m")})
                .code,
            1);
}

TEST_F(CliTest, ReportConvertsFormats) {
  ASSERT_EQ(run({"simulate", "--dataset", dataset_, "--out", out("o")}).code, 0);
  const auto r = run({"report", "--input", out("o") + "/report.json", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, testing::read_file(out("o") + "/report.csv"));
  const auto t = run({"report", "--traces", out("o") + "/traces.jsonl", "--format", "json"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(json::parse(t.out)["task"], json::parse(testing::read_file(out("o") + "/report.json"))["task"]);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({"simulate", "--bogus"}).code, 1);
  EXPECT_EQ(run({"simulate", "--dataset", dataset_, "--agent", "scripted:genius", "--out", out("z")}).code, 1);
  EXPECT_EQ(run({"--version"}).code, 0);
}

}  // namespace
}  // namespace tvae
