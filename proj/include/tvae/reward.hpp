#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tvae/action.hpp"
#include "tvae/codec.hpp"

namespace tvae {

enum class TextMatchMode { NormalizedExact, TokenF1Threshold };

struct TextMatch {
  TextMatchMode mode = TextMatchMode::NormalizedExact;
  double threshold = 1.0;  // used by TokenF1Threshold
};

/// Parameters of the action match predicate shared by simulation, rewards,
/// failure synthesis and metrics.
struct MatchConfig {
  double delta = 0.14;  // relative distance, used when no bbox is known
  TextMatch text_match;
};

/// Pluggable effect-similarity scorer. Scores lie in [0, 1].
class EffectScorer {
 public:
  virtual ~EffectScorer() = default;
  virtual std::string name() const = 0;
  virtual double score(std::string_view predicted, std::string_view reference) const = 0;
};

/// "token-f1" (default) or "exact". Throws std::invalid_argument otherwise.
std::shared_ptr<const EffectScorer> make_scorer(std::string_view descriptor);

struct RewardConfig {
  double alpha = 0.5;  // effect weight
  double beta = 0.5;   // verification weight
  MatchConfig match;
  std::string similarity = "token-f1";

  void validate() const;
};

struct RewardBreakdown {
  double r_act = 0.0;
  double r_eff = 0.0;
  double r_ver = 0.0;
  double total = 0.0;
  bool parsed = true;
  std::string scorer;
};

/// Everything a reward needs to know about the right answer.
struct RewardTarget {
  ActionRecord action;
  std::optional<Box> bbox;
  std::string reference_effect;
  Verification verification = Verification::Success;
};

/// Lowercase (ASCII) and trim.
std::string normalize_text(std::string_view s);

/// Lowercased tokens with ASCII punctuation treated as separators.
std::vector<std::string> tokenize(std::string_view s);

/// Multiset token F1. Two empty token lists score 1, one empty list scores 0.
double token_f1(std::string_view predicted, std::string_view reference);

bool text_matches(std::string_view predicted, std::string_view reference, const TextMatch& cfg);

/// Parameter agreement alone (coordinate in bbox / within delta, text, direction),
/// ignoring kind. False when the predicted action lacks the parameter.
bool parameters_match(const ActionRecord& pred, const ActionRecord& gt, const std::optional<Box>& bbox,
                      const MatchConfig& cfg);

/// Kinds equal and parameters agree. Both actions must be in relative space.
bool match_action(const ActionRecord& pred, const ActionRecord& gt, const std::optional<Box>& bbox,
                  const MatchConfig& cfg);

double effect_similarity(std::string_view predicted, std::string_view reference, const EffectScorer& scorer);

/// +1.0 when equal, -2.0 for a claimed SUCCESS on an unchanged screen,
/// -0.5 for a claimed NO_CHANGE on a successful step.
double verification_reward(Verification predicted, Verification target) noexcept;

/// out must already be in relative coordinates.
RewardBreakdown composite_reward(const TvaeOutput& out, const RewardTarget& target, const RewardConfig& cfg,
                                 const EffectScorer& scorer);

/// Reward for a turn that could not be parsed: the lowest attainable total.
RewardBreakdown unparsed_reward(const RewardConfig& cfg, const EffectScorer& scorer);

nlohmann::json breakdown_to_json(const RewardBreakdown& b);

}  // namespace tvae
