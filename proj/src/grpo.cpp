#include "tvae/grpo.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tvae/errors.hpp"
#include "tvae/jsonl.hpp"

namespace tvae {

using nlohmann::json;

std::string_view to_string(KlEstimator k) noexcept { return k == KlEstimator::Exact ? "exact" : "k3"; }

std::optional<KlEstimator> parse_kl_estimator(std::string_view s) noexcept {
  if (s == "exact") return KlEstimator::Exact;
  if (s == "k3") return KlEstimator::K3;
  return std::nullopt;
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (!(eps_std > 0.0)) throw std::invalid_argument("eps_std must be > 0");
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw std::invalid_argument("eps_clip must lie in (0, 1)");
  if (!(kl_lambda >= 0.0)) throw std::invalid_argument("kl_lambda must be >= 0");
}

json grpo_config_to_json(const GrpoConfig& cfg) {
  return {{"group_size", cfg.group_size},
          {"eps_std", cfg.eps_std},
          {"eps_clip", cfg.eps_clip},
          {"kl_lambda", cfg.kl_lambda},
          {"kl_estimator", std::string(to_string(cfg.kl_estimator))}};
}

std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& cfg) {
  const std::size_t n = rewards.size();
  if (n < 2) throw GroupTooSmall(n);
  std::vector<double> adv(n, 0.0);
  // Equal rewards carry no signal; return exact zeros rather than rounding dust.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return adv;
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(n);
  double residual = 0.0;
  for (double r : rewards) residual += r - mean;
  mean += residual / static_cast<double>(n);
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = std::sqrt(ss / static_cast<double>(n)) + cfg.eps_std;
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

namespace {

void check_lengths(const GroupOutput& o, std::size_t i) {
  const std::size_t l = o.logp_new.size();
  if (l == 0) throw LengthMismatch("output " + std::to_string(i) + " has no tokens");
  if (o.logp_old.size() != l || o.logp_ref.size() != l)
    throw LengthMismatch("output " + std::to_string(i) + ": log-prob sequences differ in length");
}

}  // namespace

std::vector<std::vector<double>> token_ratios(const GroupBatch& batch) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.outputs.size());
  for (std::size_t i = 0; i < batch.outputs.size(); ++i) {
    const GroupOutput& o = batch.outputs[i];
    check_lengths(o, i);
    std::vector<double> r(o.logp_new.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = std::exp(o.logp_new[k] - o.logp_old[k]);
    out.push_back(std::move(r));
  }
  return out;
}

SurrogateResult clipped_surrogate(const std::vector<std::vector<double>>& ratios, std::span<const double> advantages,
                                  const GrpoConfig& cfg) {
  if (ratios.size() != advantages.size())
    throw ShapeMismatch(std::to_string(ratios.size()) + " ratio rows for " + std::to_string(advantages.size()) +
                        " advantages");
  SurrogateResult res;
  res.token_losses.reserve(ratios.size());
  res.output_means.reserve(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i].empty()) throw ShapeMismatch("output " + std::to_string(i) + " has no tokens");
    const double a = advantages[i];
    std::vector<double> losses(ratios[i].size());
    double sum = 0.0;
    for (std::size_t k = 0; k < losses.size(); ++k) {
      const double rho = ratios[i][k];
      const double clipped = std::clamp(rho, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip);
      losses[k] = std::min(rho * a, clipped * a);
      sum += losses[k];
    }
    res.output_means.push_back(sum / static_cast<double>(losses.size()));
    res.token_losses.push_back(std::move(losses));
  }
  return res;
}

double exact_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw InvalidDistribution("distributions differ in support size");
  auto check = [](std::span<const double> d, const char* name) {
    double s = 0.0;
    for (double x : d) {
      if (!(x >= 0.0)) throw InvalidDistribution(std::string(name) + " has a negative or NaN entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidDistribution(std::string(name) + " does not sum to 1");
  };
  check(p, "policy distribution");
  check(q, "reference distribution");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) throw InvalidDistribution("reference assigns zero probability to a supported token");
    kl += p[j] * std::log(p[j] / q[j]);
  }
  return std::max(kl, 0.0);
}

double kl_penalty(const GroupOutput& out, const GrpoConfig& cfg) {
  if (cfg.kl_estimator == KlEstimator::Exact) {
    if (out.dist_new.empty() || out.dist_new.size() != out.dist_ref.size())
      throw LengthMismatch("exact KL needs one policy and one reference distribution per token");
    double sum = 0.0;
    for (std::size_t k = 0; k < out.dist_new.size(); ++k) sum += exact_kl(out.dist_new[k], out.dist_ref[k]);
    return sum / static_cast<double>(out.dist_new.size());
  }
  if (out.logp_new.empty() || out.logp_new.size() != out.logp_ref.size())
    throw LengthMismatch("k3 KL needs matching policy and reference log-probs");
  double sum = 0.0;
  for (std::size_t k = 0; k < out.logp_new.size(); ++k) {
    // r - 1 - ln r with r = exp(d); expm1 keeps precision near r = 1.
    const double d = out.logp_ref[k] - out.logp_new[k];
    sum += std::expm1(d) - d;
  }
  return std::max(sum / static_cast<double>(out.logp_new.size()), 0.0);
}

ObjectiveReport grpo_objective(const GroupBatch& batch, const GrpoConfig& cfg) {
  ObjectiveReport rep;
  rep.group_id = batch.group_id;
  for (std::size_t i = 0; i < batch.outputs.size(); ++i) {
    const auto& r = batch.outputs[i].reward;
    if (!r) throw std::invalid_argument("group " + batch.group_id + ": output " + std::to_string(i) + " has no reward");
    rep.rewards.push_back(*r);
  }
  rep.advantages = group_advantages(rep.rewards, cfg);
  const SurrogateResult s = clipped_surrogate(token_ratios(batch), rep.advantages, cfg);
  rep.surrogate = s.output_means;
  for (const GroupOutput& o : batch.outputs) rep.kl.push_back(kl_penalty(o, cfg));
  const double g = static_cast<double>(batch.outputs.size());
  rep.surrogate_mean = std::accumulate(rep.surrogate.begin(), rep.surrogate.end(), 0.0) / g;
  rep.kl_mean = std::accumulate(rep.kl.begin(), rep.kl.end(), 0.0) / g;
  rep.objective = rep.surrogate_mean - cfg.kl_lambda * rep.kl_mean;
  return rep;
}

std::vector<ObjectiveReport> grpo_objectives_serial(std::span<const GroupBatch> batches, const GrpoConfig& cfg) {
  std::vector<ObjectiveReport> out;
  out.reserve(batches.size());
  for (const GroupBatch& b : batches) out.push_back(grpo_objective(b, cfg));
  return out;
}

std::vector<ObjectiveReport> grpo_objectives_parallel(std::span<const GroupBatch> batches, const GrpoConfig& cfg,
                                                      int threads) {
  const auto n = static_cast<std::int64_t>(batches.size());
  std::vector<ObjectiveReport> out(batches.size());
  std::vector<std::exception_ptr> errors(batches.size());
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      out[u] = grpo_objective(batches[u], cfg);
    } catch (...) {
      errors[u] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

json report_to_json(const ObjectiveReport& r) {
  return {{"group_id", r.group_id},   {"rewards", r.rewards},   {"advantages", r.advantages},
          {"surrogate", r.surrogate}, {"kl", r.kl},             {"surrogate_mean", r.surrogate_mean},
          {"kl_mean", r.kl_mean},     {"objective", r.objective}};
}

json group_to_json(const GroupBatch& b) {
  json outs = json::array();
  for (const GroupOutput& o : b.outputs) {
    json j;
    if (o.reward) j["reward"] = *o.reward;
    if (o.sample_index) j["sample_index"] = *o.sample_index;
    j["logp_new"] = o.logp_new;
    j["logp_old"] = o.logp_old;
    j["logp_ref"] = o.logp_ref;
    if (!o.dist_new.empty()) j["dist_new"] = o.dist_new;
    if (!o.dist_ref.empty()) j["dist_ref"] = o.dist_ref;
    outs.push_back(std::move(j));
  }
  return {{"group_id", b.group_id}, {"outputs", std::move(outs)}};
}

GroupBatch group_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("group must be an object");
  GroupBatch b;
  try {
    b.group_id = j.at("group_id").get<std::string>();
    for (const json& o : j.at("outputs")) {
      GroupOutput out;
      if (o.contains("reward")) out.reward = o["reward"].get<double>();
      if (o.contains("sample_index")) out.sample_index = o["sample_index"].get<std::size_t>();
      if (!out.reward && !out.sample_index) throw SchemaError("output needs reward or sample_index");
      out.logp_new = o.at("logp_new").get<std::vector<double>>();
      out.logp_old = o.at("logp_old").get<std::vector<double>>();
      out.logp_ref = o.at("logp_ref").get<std::vector<double>>();
      for (const auto* seq : {&out.logp_new, &out.logp_old, &out.logp_ref})
        for (double x : *seq)
          if (!(x <= 1e-9)) throw SchemaError("log-probabilities must be <= 0");
      if (o.contains("dist_new")) out.dist_new = o["dist_new"].get<std::vector<std::vector<double>>>();
      if (o.contains("dist_ref")) out.dist_ref = o["dist_ref"].get<std::vector<std::vector<double>>>();
      b.outputs.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("group: ") + e.what());
  }
  return b;
}

std::vector<GroupBatch> read_groups(const std::filesystem::path& path) {
  return read_jsonl<GroupBatch>(path, [](const json& j) { return group_from_json(j); });
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
  return out;
}

namespace {

std::vector<double> exp_all(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = std::exp(v[j]);
  return out;
}

}  // namespace

GroupBatch toy_batch(const ToyProblem& p, std::span<const double> logits) {
  const auto lp_new = log_softmax(logits);
  const auto lp_old = log_softmax(p.old_logits);
  const auto lp_ref = log_softmax(p.ref_logits);
  const auto d_new = exp_all(lp_new);
  const auto d_ref = exp_all(lp_ref);
  GroupBatch b;
  b.group_id = "toy";
  for (std::size_t i = 0; i < p.tokens.size(); ++i) {
    GroupOutput o;
    o.reward = p.rewards.at(i);
    for (std::size_t y : p.tokens[i]) {
      o.logp_new.push_back(lp_new.at(y));
      o.logp_old.push_back(lp_old.at(y));
      o.logp_ref.push_back(lp_ref.at(y));
      o.dist_new.push_back(d_new);
      o.dist_ref.push_back(d_ref);
    }
    b.outputs.push_back(std::move(o));
  }
  return b;
}

double toy_objective(const ToyProblem& p, std::span<const double> logits, const GrpoConfig& cfg) {
  return grpo_objective(toy_batch(p, logits), cfg).objective;
}

std::vector<double> toy_gradient(const ToyProblem& p, std::span<const double> logits, const GrpoConfig& cfg) {
  const std::size_t v = logits.size();
  const auto lp_new = log_softmax(logits);
  const auto lp_old = log_softmax(p.old_logits);
  const auto lp_ref = log_softmax(p.ref_logits);
  const auto probs = exp_all(lp_new);
  const auto adv = group_advantages(p.rewards, cfg);
  const double g = static_cast<double>(p.tokens.size());

  // d log p(y) / d logits = onehot(y) - probs.
  std::vector<double> grad(v, 0.0);
  auto add_dlogp = [&](std::size_t y, double w) {
    for (std::size_t m = 0; m < v; ++m) grad[m] -= w * probs[m];
    grad[y] += w;
  };

  for (std::size_t i = 0; i < p.tokens.size(); ++i) {
    const auto& seq = p.tokens[i];
    const double li = static_cast<double>(seq.size());
    for (std::size_t y : seq) {
      const double rho = std::exp(lp_new[y] - lp_old[y]);
      const double clipped = std::clamp(rho, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip);
      // The unclipped branch carries gradient when it is the active minimum
      // or when the ratio sits inside the clip range.
      const bool live = rho * adv[i] <= clipped * adv[i] || clipped == rho;
      if (live) add_dlogp(y, adv[i] * rho / (g * li));
    }
  }

  if (cfg.kl_lambda != 0.0) {
    if (cfg.kl_estimator == KlEstimator::Exact) {
      // Every token sees the same distribution, so the mean KL is KL(p || q).
      double kl = 0.0;
      for (std::size_t m = 0; m < v; ++m) kl += probs[m] * (lp_new[m] - lp_ref[m]);
      for (std::size_t m = 0; m < v; ++m) grad[m] -= cfg.kl_lambda * probs[m] * (lp_new[m] - lp_ref[m] - kl);
    } else {
      for (const auto& seq : p.tokens) {
        const double li = static_cast<double>(seq.size());
        for (std::size_t y : seq) {
          const double r = std::exp(lp_ref[y] - lp_new[y]);
          add_dlogp(y, -cfg.kl_lambda * (1.0 - r) / (g * li));
        }
      }
    }
  }
  return grad;
}

}  // namespace tvae
