#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tvae {

enum class KlEstimator { Exact, K3 };
std::string_view to_string(KlEstimator k) noexcept;
std::optional<KlEstimator> parse_kl_estimator(std::string_view s) noexcept;

struct GrpoConfig {
  std::size_t group_size = 6;
  double eps_std = 1e-8;
  double eps_clip = 0.2;
  double kl_lambda = 0.05;
  KlEstimator kl_estimator = KlEstimator::K3;

  /// Throws std::invalid_argument.
  void validate() const;
};

nlohmann::json grpo_config_to_json(const GrpoConfig& cfg);

/// One sampled output of a group. Distributions are per token, over the
/// vocabulary, and only needed by the Exact KL estimator.
struct GroupOutput {
  std::optional<double> reward;
  /// Alternative to `reward`: index of a scored sample that supplies it.
  std::optional<std::size_t> sample_index;
  std::vector<double> logp_new;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  std::vector<std::vector<double>> dist_new;
  std::vector<std::vector<double>> dist_ref;
};

struct GroupBatch {
  std::string group_id;
  std::vector<GroupOutput> outputs;
};

/// (R_i - mean) / (population std + eps). Throws GroupTooSmall.
std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& cfg);

/// exp(logp_new - logp_old) per token. Throws LengthMismatch.
std::vector<std::vector<double>> token_ratios(const GroupBatch& batch);

struct SurrogateResult {
  std::vector<std::vector<double>> token_losses;
  std::vector<double> output_means;  // (1/L_i) * sum_k
};

/// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A) per token. Throws ShapeMismatch.
SurrogateResult clipped_surrogate(const std::vector<std::vector<double>>& ratios, std::span<const double> advantages,
                                  const GrpoConfig& cfg);

/// Per-token mean KL(new || ref) of one output. Exact needs dist_new and
/// dist_ref; throws InvalidDistribution when a row does not sum to 1 within 1e-9.
double kl_penalty(const GroupOutput& out, const GrpoConfig& cfg);

/// KL(p || q) for one pair of distributions.
double exact_kl(std::span<const double> p, std::span<const double> q);

struct ObjectiveReport {
  std::string group_id;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> surrogate;  // per output
  std::vector<double> kl;         // per output
  double surrogate_mean = 0.0;
  double kl_mean = 0.0;
  double objective = 0.0;
};

/// Every output must carry a reward. Throws propagated numeric errors.
ObjectiveReport grpo_objective(const GroupBatch& batch, const GrpoConfig& cfg);

std::vector<ObjectiveReport> grpo_objectives_serial(std::span<const GroupBatch> batches, const GrpoConfig& cfg);
std::vector<ObjectiveReport> grpo_objectives_parallel(std::span<const GroupBatch> batches, const GrpoConfig& cfg,
                                                      int threads = 0);

nlohmann::json report_to_json(const ObjectiveReport& r);
nlohmann::json group_to_json(const GroupBatch& b);
GroupBatch group_from_json(const nlohmann::json& j);
/// JSONL, one group per line. Throws MalformedLine.
std::vector<GroupBatch> read_groups(const std::filesystem::path& path);

/// A context-free softmax policy over a tiny vocabulary, used to check that
/// the objective is differentiable in the way the analytic gradient says.
struct ToyProblem {
  std::vector<double> old_logits;
  std::vector<double> ref_logits;
  std::vector<std::vector<std::size_t>> tokens;  // one token sequence per output
  std::vector<double> rewards;
};

std::vector<double> log_softmax(std::span<const double> logits);

GroupBatch toy_batch(const ToyProblem& p, std::span<const double> logits);
double toy_objective(const ToyProblem& p, std::span<const double> logits, const GrpoConfig& cfg);
/// dJ/dlogits in closed form.
std::vector<double> toy_gradient(const ToyProblem& p, std::span<const double> logits, const GrpoConfig& cfg);

}  // namespace tvae
