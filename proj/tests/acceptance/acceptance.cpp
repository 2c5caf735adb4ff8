// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "tvae/errors.hpp"
#include "tvae/failure_forge.hpp"
#include "tvae/grpo.hpp"
#include "tvae/metrics.hpp"
#include "tvae/reward.hpp"
#include "tvae/sim.hpp"

namespace {

using namespace tvae;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Result {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tvae-harness");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Result oracle_end_to_end() {
  Result r;
  const auto ds = testing::make_dataset(100, 1, 8, 2026);
  ScriptedAgent agent(ScriptedVariant::parse("oracle"));
  SimConfig cfg;
  cfg.seed = 1;
  const auto t0 = Clock::now();
  const auto traces = run_episodes_serial(ds, make_jobs(ds.size(), 1), agent, cfg);
  const auto m = task_metrics(traces);
  const double elapsed = seconds_since(t0);
  r.require(m.tsr == 1.0 && m.pg == 1.0 && m.sim_tsr == 1.0 && m.aso == 0.0,
            "metrics tsr=" + std::to_string(m.tsr) + " pg=" + std::to_string(m.pg) +
                " sim_tsr=" + std::to_string(m.sim_tsr) + " aso=" + std::to_string(m.aso));
  r.require(elapsed < 5.0, "took " + std::to_string(elapsed) + " s");
  r.detail = r.ok ? "100 tasks, " + std::to_string(elapsed) + " s" : r.detail;
  return r;
}

Result loopy_pathology() {
  Result r;
  const auto dir = testing::temp_dir("acc_loopy");
  const auto ds = testing::make_dataset(50, 1, 8, 7);
  save_dataset(dir / "d.jsonl", ds);
  r.require(run_cli({"bench-robust", "--agent", "scripted:loopy", "--synthesize", "--dataset",
                     (dir / "d.jsonl").string(), "--per-traj", "2", "--seed", "7", "--out", (dir / "b").string()}) ==
                0,
            "bench-robust failed");
  if (r.ok) {
    const auto rep = json::parse(testing::read_file(dir / "b" / "report.json"));
    r.require(rep["robustness"]["lr"] == 1.0 && rep["robustness"]["rsr"] == 0.0,
              "robustness " + rep["robustness"].dump());
  }
  r.require(run_cli({"simulate", "--agent", "scripted:loopy", "--dataset", (dir / "d.jsonl").string(), "--seed", "7",
                     "--out", (dir / "s").string()}) == 0,
            "simulate failed");
  if (r.ok) {
    std::istringstream lines(testing::read_file(dir / "s" / "traces.jsonl"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      const auto tr = trace_from_json(json::parse(line));
      r.require(tr.outcome == Outcome::BudgetExhausted && tr.final_cursor == 0, "episode " + tr.trajectory_id);
      ++n;
    }
    r.require(n == ds.size(), "trace count");
  }
  fs::remove_all(dir);
  if (r.ok) r.detail = "LR 1.0, RSR 0.0, all episodes exhausted at cursor 0";
  return r;
}

Result fail_once() {
  Result r;
  ScriptedAgent agent(ScriptedVariant::parse("failk:1"));
  for (std::size_t t = 1; t <= 16; ++t) {
    std::vector<TrajectoryRecord> ds;
    for (int i = 0; i < 5; ++i) ds.push_back(testing::make_trajectory("f" + std::to_string(i), t, t * 31 + i));
    const auto traces = run_episodes_serial(ds, make_jobs(ds.size(), 1), agent, SimConfig{});
    const auto m = task_metrics(traces);
    r.require(m.sim_tsr == 1.0 && m.aso == static_cast<double>(t),
              "T=" + std::to_string(t) + " sim_tsr=" + std::to_string(m.sim_tsr) + " aso=" + std::to_string(m.aso));
  }
  if (r.ok) r.detail = "T = 1..16";
  return r;
}

Result bernoulli_half() {
  Result r;
  // 16 equally likely outcome sequences of four attempts; success needs two hits.
  int wins = 0;
  for (unsigned s = 0; s < 16; ++s) wins += __builtin_popcount(s) >= 2;
  const double analytic = wins / 16.0;
  r.require(analytic == 0.6875, "enumeration gave " + std::to_string(analytic));

  const std::vector<TrajectoryRecord> ds{testing::make_trajectory("b", 2, 5)};
  ScriptedAgent agent(ScriptedVariant::parse("bernoulli:0.5"));
  SimConfig cfg;
  cfg.seed = 2026;
  const auto t0 = Clock::now();
  const auto traces = run_episodes_parallel(ds, make_jobs(1, 100000), agent, cfg, 8);
  const auto m = task_metrics_parallel(traces, 8);
  const double elapsed = seconds_since(t0);
  r.require(std::fabs(m.sim_tsr - analytic) <= 0.01, "sim_tsr=" + std::to_string(m.sim_tsr));
  r.require(elapsed < 60.0, "took " + std::to_string(elapsed) + " s");
  if (r.ok) r.detail = "Sim-TSR " + std::to_string(m.sim_tsr) + " vs 0.6875, " + std::to_string(elapsed) + " s";
  return r;
}

Result reward_constants() {
  Result r;
  r.require(verification_reward(Verification::Success, Verification::Success) == 1.0 &&
                verification_reward(Verification::NoChange, Verification::NoChange) == 1.0 &&
                verification_reward(Verification::Success, Verification::NoChange) == -2.0 &&
                verification_reward(Verification::NoChange, Verification::Success) == -0.5,
            "verification grid");
  RewardConfig cfg;
  auto scorer = make_scorer(cfg.similarity);
  TvaeOutput best;
  best.think = {{ThinkTag::Recall, "r"}};
  best.action = ActionRecord::click({0.5, 0.5});
  best.coordinate_space = CoordinateSpace::Relative;
  best.expected_effect = "The cart opens.";
  const RewardTarget target{best.action, std::nullopt, best.expected_effect, Verification::Success};
  const double hi = composite_reward(best, target, cfg, *scorer).total;
  TvaeOutput worst = best;
  worst.action = ActionRecord::navigate_back();
  worst.coordinate_space = CoordinateSpace::Unknown;
  RewardTarget stuck = target;
  stuck.verification = Verification::NoChange;
  const double lo = composite_reward(worst, stuck, cfg, *scorer).total;
  r.require(hi == 2.0 && lo == -2.0, "extremes " + std::to_string(hi) + ", " + std::to_string(lo));
  r.require(unparsed_reward(cfg, *scorer).total == -2.0, "unparsed floor");
  if (r.ok) r.detail = "grid (+1, +1, -2, -0.5), extremes 2.0 / -2.0";
  return r;
}

Result grpo_numerics() {
  Result r;
  GrpoConfig cfg;
  Rng rng(6);
  for (int trial = 0; trial < 1000 && r.ok; ++trial) {
    std::vector<double> rewards(2 + rng.index(12));
    for (auto& v : rewards) v = rng.uniform(-2.0, 2.0);
    const auto a = group_advantages(rewards, cfg);
    double mean = 0.0;
    for (double v : a) mean += v;
    mean /= static_cast<double>(a.size());
    double var = 0.0;
    for (double v : a) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(a.size()));
    r.require(std::fabs(mean) < 1e-12, "advantage mean " + std::to_string(mean));
    r.require(std::fabs(sd - 1.0) <= 1e-6, "advantage std " + std::to_string(sd));
  }

  ToyProblem p;
  p.old_logits = {0.2, -0.4, 0.9, 0.0, -1.1};
  p.ref_logits = {0.0, 0.3, 0.5, -0.2, -0.6};
  p.tokens = {{0, 2, 2}, {1}, {3, 4, 0, 1}, {2, 2}, {4, 0}, {1, 3}};
  p.rewards = {1.9, -2.0, 0.4, 1.2, -0.5, 0.0};
  cfg.kl_estimator = KlEstimator::Exact;

  for (double k : grpo_objective(toy_batch(p, p.ref_logits), cfg).kl)
    r.require(std::fabs(k) <= 1e-12, "KL at reference " + std::to_string(k));

  double worst = 0.0;
  const double h = 1e-5;
  for (auto est : {KlEstimator::Exact, KlEstimator::K3}) {
    cfg.kl_estimator = est;
    for (const std::vector<double>& theta :
         {std::vector<double>{0.25, -0.35, 0.8, 0.05, -1.0}, std::vector<double>{0.9, -0.9, 1.6, -0.3, -0.2}}) {
      const auto g = toy_gradient(p, theta, cfg);
      for (std::size_t m = 0; m < theta.size(); ++m) {
        auto up = theta, down = theta;
        up[m] += h;
        down[m] -= h;
        const double fd = (toy_objective(p, up, cfg) - toy_objective(p, down, cfg)) / (2 * h);
        worst = std::max(worst, std::fabs(fd - g[m]));
      }
    }
  }
  r.require(worst <= 1e-5, "gradient error " + std::to_string(worst));
  if (r.ok) {
    std::ostringstream os;
    os << "max |grad - fd| = " << worst;
    r.detail = os.str();
  }
  return r;
}

Result mode_mixture() {
  Result r;
  FailureWeights w;
  Rng rng(12345);
  std::array<int, kFailureModeCount> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const FailureMode m = sample_mode(w, rng);
    for (std::size_t k = 0; k < kFailureModeCount; ++k) counts[k] += kAllFailureModes[k] == m;
  }
  double chi2 = 0.0;
  for (std::size_t k = 0; k < kFailureModeCount; ++k) {
    const double e = n * w.w[k];
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  // survival function of chi-square with 4 degrees of freedom
  const double p = std::exp(-chi2 / 2.0) * (1.0 + chi2 / 2.0);
  r.require(p > 0.001, "p=" + std::to_string(p));
  if (r.ok) r.detail = "chi2=" + std::to_string(chi2) + " p=" + std::to_string(p);
  return r;
}

Result codec_fidelity() {
  Result r;
  const auto a = parse_tvae(testing::read_file(testing::data_dir() / "type_a_output.txt"));
  r.require(a.usable() && a.output->verification == Verification::Success &&
                a.output->action == ActionRecord::click({317, 1190}),
            "type A example");
  const auto b = parse_tvae(testing::read_file(testing::data_dir() / "type_b_output.txt"));
  bool diag = false, rec = false;
  if (b.output)
    for (const auto& s : b.output->think) {
      diag |= s.tag == ThinkTag::Diagnose;
      rec |= s.tag == ThinkTag::Recovery;
    }
  r.require(b.usable() && b.output->verification == Verification::NoChange &&
                b.output->action.kind == ActionKind::InputText && diag && rec,
            "type B example");

  Rng rng(2024);
  for (int i = 0; i < 1000 && r.ok; ++i) {
    const auto o = testing::random_output(rng);
    const std::string text = emit_tvae(o);
    const auto back = parse_tvae(text, ParseMode::Lenient);
    r.require(back.usable() && *back.output == o && emit_tvae(*back.output) == text, "round trip " + text);
  }
  Rng bytes(77);
  for (int i = 0; i < 10000 && r.ok; ++i) {
    const std::string raw = testing::random_bytes(bytes, 400);
    try {
      const auto res = parse_tvae(raw, ParseMode::Lenient);
      r.require(res.output.has_value() || res.failure.has_value(), "lenient result without output or failure");
    } catch (const std::exception& e) {
      r.require(false, std::string("lenient parse threw: ") + e.what());
    }
  }
  if (r.ok) r.detail = "2 worked examples, 1000 round trips, 10000 byte inputs";
  return r;
}

Result metric_algebra() {
  Result r;
  const auto ds = testing::make_dataset(40, 1, 8, 6);
  for (const char* v : {"oracle", "loopy", "failk:1", "failk:2", "bernoulli:0.3", "bernoulli:0.7",
                        "offset-then-correct"}) {
    ScriptedAgent agent(ScriptedVariant::parse(v));
    SimConfig cfg;
    cfg.seed = 3;
    const auto traces = run_episodes_serial(ds, make_jobs(ds.size(), 2), agent, cfg);
    const auto tm = task_metrics(traces);
    const auto sm = step_metrics(predictions_from_traces(ds, traces), cfg.match());
    const auto tf = step_metrics(run_step_eval_parallel(ds, agent, cfg, 1), cfg.match());
    r.require(sm.sr <= sm.tm && tf.sr <= tf.tm, std::string("SR > TM for ") + v);
    r.require(tm.tsr <= tm.sim_tsr, std::string("TSR > Sim-TSR for ") + v);
    for (const auto& t : traces)
      if (t.outcome == Outcome::CompletedFirstTry) {
        const std::vector<SimTrace> one{t};
        r.require(task_metrics(one).pg == 1.0, "PG of a first-try trace");
      }
  }

  std::vector<std::pair<std::size_t, std::uint64_t>> configs;
  std::vector<SimTrace> traces;
  for (std::size_t t = 1; t <= 3; ++t) {
    const auto traj = testing::make_click_trajectory("e" + std::to_string(t), t);
    for (std::uint64_t mask = 0; mask < (1u << (2 * t)); ++mask) {
      testing::MaskAgent agent(mask);
      configs.emplace_back(t, mask);
      traces.push_back(run_episode(traj, agent, SimConfig{}));
    }
  }
  const std::size_t k = configs.size();
  std::size_t checked = 0;
  auto check = [&](std::initializer_list<std::size_t> idx) {
    std::vector<std::pair<std::size_t, std::uint64_t>> cs;
    std::vector<SimTrace> ts;
    for (auto i : idx) {
      cs.push_back(configs[i]);
      ts.push_back(traces[i]);
    }
    const auto o = testing::oracle_task_metrics(cs);
    const auto m = task_metrics(ts);
    r.require(m.tsr == o.tsr && m.pg == o.pg && m.sim_tsr == o.sim_tsr && m.aso == o.aso, "enumeration mismatch");
    ++checked;
  };
  for (std::size_t a = 0; a < k && r.ok; ++a) {
    check({a});
    for (std::size_t b = 0; b < k; ++b) {
      check({a, b});
      for (std::size_t c = 0; c < k; ++c) check({a, b, c});
    }
  }
  if (r.ok) r.detail = std::to_string(checked) + " enumerated configurations";
  return r;
}

Result determinism() {
  Result r;
  const auto dir = testing::temp_dir("acc_det");
  const std::string d = (dir / "d.jsonl").string();
  save_dataset(d, testing::make_dataset(30, 1, 8, 11));

  auto same = [&](const fs::path& a, const fs::path& b) {
    for (const auto& e : fs::directory_iterator(a)) {
      const auto name = e.path().filename();
      r.require(fs::exists(b / name) && testing::read_file(e.path()) == testing::read_file(b / name),
                "differs: " + (b / name).string());
    }
  };
  auto rerun = [&](const std::vector<std::string>& args, const std::string& tag) {
    auto first = args;
    first.insert(first.end(), {"--out", (dir / (tag + "1")).string()});
    r.require(run_cli(first) == 0, tag + " failed");
    const std::string cmd = args.front();
    r.require(run_cli({cmd, "--config", (dir / (tag + "1") / "manifest.json").string(), "--threads", "3", "--out",
                       (dir / (tag + "2")).string()}) == 0,
              tag + " rerun failed");
    if (r.ok) same(dir / (tag + "1"), dir / (tag + "2"));
  };

  rerun({"simulate", "--agent", "scripted:bernoulli:0.5", "--seed", "5", "--replicates", "4", "--dataset", d}, "sim");
  rerun({"bench-robust", "--agent", "scripted:bernoulli:0.5", "--synthesize", "--per-traj", "2", "--seed", "5",
         "--dataset", d},
        "br");
  rerun({"synth", "--dataset", d, "--ratio-b", "0.3", "--robust-per-traj", "1", "--seed", "5"}, "sy");
  if (r.ok) {
    const auto samples = read_samples(dir / "sy1" / "sft.jsonl");
    std::ofstream f(dir / "outputs.jsonl");
    Rng rng(1);
    for (const auto& s : samples) {
      const auto v = rng.bernoulli(0.5) ? s.target_verification : Verification::Success;
      f << json{{"output", compose_turn(s.target_action, v, "Some effect.", s.history.empty())}}.dump() << "\n";
    }
  }
  rerun({"score", "--samples", (dir / "sy1" / "sft.jsonl").string(), "--outputs", (dir / "outputs.jsonl").string()},
        "sc");
  for (const char* fmt : {"json", "csv", "markdown"}) {
    std::ostringstream a, b, e;
    const std::vector<std::string> args{"tvae-harness", "report", "--traces", (dir / "sim1" / "traces.jsonl").string(),
                                        "--results", (dir / "br1" / "results.jsonl").string(), "--format", fmt};
    r.require(cli::run_cli(args, a, e) == 0 && cli::run_cli(args, b, e) == 0 && a.str() == b.str(),
              std::string("report ") + fmt);
  }
  fs::remove_all(dir);
  if (r.ok) r.detail = "simulate, bench-robust, synth, score, report";
  return r;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"1 oracle end-to-end", oracle_end_to_end},
      {"2 loopy pathology", loopy_pathology},
      {"3 fail-once recovery", fail_once},
      {"4 bernoulli two-step", bernoulli_half},
      {"5 reward constants", reward_constants},
      {"6 grpo numerics", grpo_numerics},
      {"7 failure-mode mixture", mode_mixture},
      {"8 codec fidelity", codec_fidelity},
      {"9 metric algebra", metric_algebra},
      {"10 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.ok = false;
      r.detail = std::string("exception: ") + e.what();
    }
    std::cout << (r.ok ? "PASS " : "FAIL ") << name << (r.detail.empty() ? "" : " -- " + r.detail) << std::endl;
    failed += !r.ok;
  }
  return failed == 0 ? 0 : 1;
}
