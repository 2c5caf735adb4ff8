// Serial reference vs OpenMP kernels. Run with --benchmark_filter to pick a
// kernel; the /threads argument only applies to the parallel variants.

#include <benchmark/benchmark.h>

#include "support.hpp"
#include "tvae/grpo.hpp"
#include "tvae/metrics.hpp"
#include "tvae/score.hpp"
#include "tvae/sim.hpp"

namespace {

using namespace tvae;

const std::vector<TrajectoryRecord>& dataset() {
  static const auto ds = testing::make_dataset(200, 1, 8, 42);
  return ds;
}

void BM_EpisodesSerial(benchmark::State& state) {
  dataset();
  ScriptedAgent agent(ScriptedVariant::parse("bernoulli:0.5"));
  const auto jobs = make_jobs(dataset().size(), 5);
  for (auto _ : state) benchmark::DoNotOptimize(run_episodes_serial(dataset(), jobs, agent, SimConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(jobs.size()));
}
BENCHMARK(BM_EpisodesSerial)->Unit(benchmark::kMillisecond);

void BM_EpisodesParallel(benchmark::State& state) {
  ScriptedAgent agent(ScriptedVariant::parse("bernoulli:0.5"));
  const auto jobs = make_jobs(dataset().size(), 5);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_episodes_parallel(dataset(), jobs, agent, SimConfig{}, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(jobs.size()));
}
BENCHMARK(BM_EpisodesParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

struct ScoreInputs {
  std::vector<SyntheticSample> samples;
  std::vector<std::string> outputs;
};

const ScoreInputs& score_inputs() {
  static const ScoreInputs in = [] {
    ScoreInputs s;
    s.samples = build_sft_dataset(dataset(), 0.3, 1);
    for (const auto& x : s.samples)
      s.outputs.push_back(compose_turn(x.target_action, x.target_verification, x.target_effect, x.history.empty()));
    return s;
  }();
  return in;
}

void BM_ScoreSerial(benchmark::State& state) {
  const auto& in = score_inputs();
  for (auto _ : state) benchmark::DoNotOptimize(score_serial(in.samples, in.outputs, RewardConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.samples.size()));
}
BENCHMARK(BM_ScoreSerial)->Unit(benchmark::kMillisecond);

void BM_ScoreParallel(benchmark::State& state) {
  const auto& in = score_inputs();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(score_parallel(in.samples, in.outputs, RewardConfig{}, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.samples.size()));
}
BENCHMARK(BM_ScoreParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

const std::vector<SimTrace>& traces() {
  static const auto t = [] {
    ScriptedAgent agent(ScriptedVariant::parse("bernoulli:0.5"));
    return run_episodes_serial(dataset(), make_jobs(dataset().size(), 50), agent, SimConfig{});
  }();
  return t;
}

void BM_TaskMetricsSerial(benchmark::State& state) {
  const auto& t = traces();
  for (auto _ : state) benchmark::DoNotOptimize(task_metrics(t));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(traces().size()));
}
BENCHMARK(BM_TaskMetricsSerial);

void BM_TaskMetricsParallel(benchmark::State& state) {
  const auto& t = traces();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(task_metrics_parallel(t, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(traces().size()));
}
BENCHMARK(BM_TaskMetricsParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8);

void BM_StepMetricsSerial(benchmark::State& state) {
  const auto preds = predictions_from_traces(dataset(), traces());
  for (auto _ : state) benchmark::DoNotOptimize(step_metrics(preds, MatchConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(preds.size()));
}
BENCHMARK(BM_StepMetricsSerial);

void BM_StepMetricsParallel(benchmark::State& state) {
  const auto preds = predictions_from_traces(dataset(), traces());
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(step_metrics_parallel(preds, MatchConfig{}, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(preds.size()));
}
BENCHMARK(BM_StepMetricsParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8);

const std::vector<GroupBatch>& groups() {
  static const auto g = [] {
    Rng rng(8);
    std::vector<GroupBatch> out;
    for (int i = 0; i < 2000; ++i) {
      GroupBatch b;
      b.group_id = "g" + std::to_string(i);
      for (int k = 0; k < 6; ++k) {
        GroupOutput o;
        o.reward = rng.uniform(-2, 2);
        for (int t = 0; t < 64; ++t) {
          o.logp_new.push_back(-rng.uniform(0.1, 3));
          o.logp_old.push_back(-rng.uniform(0.1, 3));
          o.logp_ref.push_back(-rng.uniform(0.1, 3));
        }
        b.outputs.push_back(std::move(o));
      }
      out.push_back(std::move(b));
    }
    return out;
  }();
  return g;
}

void BM_GrpoSerial(benchmark::State& state) {
  const auto& g = groups();
  for (auto _ : state) benchmark::DoNotOptimize(grpo_objectives_serial(g, GrpoConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(groups().size()));
}
BENCHMARK(BM_GrpoSerial)->Unit(benchmark::kMillisecond);

void BM_GrpoParallel(benchmark::State& state) {
  const auto& g = groups();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(grpo_objectives_parallel(g, GrpoConfig{}, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(groups().size()));
}
BENCHMARK(BM_GrpoParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
