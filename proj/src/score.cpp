#include "tvae/score.hpp"

#include <omp.h>

#include "tvae/errors.hpp"
#include "tvae/jsonl.hpp"
#include "tvae/sim.hpp"

namespace tvae {

RewardTarget target_for(const SyntheticSample& s) {
  return {s.target_action, s.target_bbox, s.target_effect, s.target_verification};
}

RewardBreakdown score_output(const SyntheticSample& sample, std::string_view raw, const RewardConfig& cfg,
                             const EffectScorer& scorer) {
  const AgentTurn turn = interpret_turn(raw, sample.screen_dims);
  if (!turn.output) return unparsed_reward(cfg, scorer);
  return composite_reward(*turn.output, target_for(sample), cfg, scorer);
}

namespace {

void check_aligned(std::size_t samples, std::size_t outputs) {
  if (samples != outputs)
    throw AlignmentMismatch(std::to_string(samples) + " samples but " + std::to_string(outputs) + " outputs");
}

}  // namespace

std::vector<RewardBreakdown> score_serial(std::span<const SyntheticSample> samples,
                                          std::span<const std::string> outputs, const RewardConfig& cfg) {
  check_aligned(samples.size(), outputs.size());
  const auto scorer = make_scorer(cfg.similarity);
  std::vector<RewardBreakdown> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back(score_output(samples[i], outputs[i], cfg, *scorer));
  return out;
}

std::vector<RewardBreakdown> score_parallel(std::span<const SyntheticSample> samples,
                                            std::span<const std::string> outputs, const RewardConfig& cfg,
                                            int threads) {
  check_aligned(samples.size(), outputs.size());
  const auto scorer = make_scorer(cfg.similarity);
  std::vector<RewardBreakdown> out(samples.size());
  const auto n = static_cast<std::int64_t>(samples.size());
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  // score_output does not throw for any input text, so no exception capture is needed.
#pragma omp parallel for schedule(dynamic, 64) num_threads(nthreads)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = score_output(samples[u], outputs[u], cfg, *scorer);
  }
  return out;
}

std::vector<std::string> read_outputs(const std::filesystem::path& path) {
  return read_jsonl<std::string>(path, [](const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("output") || !j["output"].is_string())
      throw SchemaError("each line needs a string field \"output\"");
    return j["output"].get<std::string>();
  });
}

}  // namespace tvae
