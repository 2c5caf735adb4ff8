#include "tvae/reward.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace tvae {

using nlohmann::json;

namespace {

class TokenF1Scorer final : public EffectScorer {
 public:
  std::string name() const override { return "token-f1"; }
  double score(std::string_view p, std::string_view r) const override { return token_f1(p, r); }
};

class ExactScorer final : public EffectScorer {
 public:
  std::string name() const override { return "exact"; }
  double score(std::string_view p, std::string_view r) const override {
    return normalize_text(p) == normalize_text(r) ? 1.0 : 0.0;
  }
};

}  // namespace

std::shared_ptr<const EffectScorer> make_scorer(std::string_view descriptor) {
  if (descriptor == "token-f1") return std::make_shared<TokenF1Scorer>();
  if (descriptor == "exact") return std::make_shared<ExactScorer>();
  throw std::invalid_argument("unknown effect similarity '" + std::string(descriptor) + "'");
}

void RewardConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("reward weights must be non-negative");
  if (!(match.delta > 0.0 && match.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  make_scorer(similarity);
}

std::string normalize_text(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

double token_f1(std::string_view predicted, std::string_view reference) {
  const auto p = tokenize(predicted);
  const auto r = tokenize(reference);
  if (p.empty() && r.empty()) return 1.0;
  if (p.empty() || r.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : r) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

bool text_matches(std::string_view predicted, std::string_view reference, const TextMatch& cfg) {
  if (cfg.mode == TextMatchMode::NormalizedExact) return normalize_text(predicted) == normalize_text(reference);
  return token_f1(predicted, reference) >= cfg.threshold;
}

bool parameters_match(const ActionRecord& pred, const ActionRecord& gt, const std::optional<Box>& bbox,
                      const MatchConfig& cfg) {
  switch (gt.kind) {
    case ActionKind::Click:
    case ActionKind::LongPress:
      if (!pred.coordinate || !gt.coordinate) return false;
      if (bbox) return bbox->contains(*pred.coordinate);
      return distance(*pred.coordinate, *gt.coordinate) <= cfg.delta;
    case ActionKind::Scroll: return pred.direction && gt.direction && *pred.direction == *gt.direction;
    case ActionKind::InputText:
    case ActionKind::OpenApp: return pred.text && gt.text && text_matches(*pred.text, *gt.text, cfg.text_match);
    case ActionKind::NavigateBack:
    case ActionKind::Wait: return true;
  }
  return false;
}

bool match_action(const ActionRecord& pred, const ActionRecord& gt, const std::optional<Box>& bbox,
                  const MatchConfig& cfg) {
  return pred.kind == gt.kind && parameters_match(pred, gt, bbox, cfg);
}

double effect_similarity(std::string_view predicted, std::string_view reference, const EffectScorer& scorer) {
  return std::clamp(scorer.score(predicted, reference), 0.0, 1.0);
}

double verification_reward(Verification predicted, Verification target) noexcept {
  if (predicted == target) return 1.0;
  if (predicted == Verification::Success) return -2.0;  // hallucinated success
  return -0.5;                                           // missed success
}

RewardBreakdown composite_reward(const TvaeOutput& out, const RewardTarget& target, const RewardConfig& cfg,
                                 const EffectScorer& scorer) {
  RewardBreakdown b;
  b.scorer = scorer.name();
  const bool matched = match_action(out.action, target.action, target.bbox, cfg.match);
  b.r_act = matched ? 1.0 : -1.0;
  b.r_eff = matched ? effect_similarity(out.expected_effect, target.reference_effect, scorer) : 0.0;
  b.r_ver = verification_reward(out.verification, target.verification);
  b.total = b.r_act + cfg.alpha * b.r_eff + cfg.beta * b.r_ver;
  return b;
}

RewardBreakdown unparsed_reward(const RewardConfig& cfg, const EffectScorer& scorer) {
  RewardBreakdown b;
  b.scorer = scorer.name();
  b.parsed = false;
  b.r_act = -1.0;
  b.r_eff = 0.0;
  b.r_ver = -2.0;
  b.total = b.r_act + cfg.beta * b.r_ver;
  return b;
}

json breakdown_to_json(const RewardBreakdown& b) {
  return json{{"r_act", b.r_act}, {"r_eff", b.r_eff},   {"r_ver", b.r_ver},
              {"total", b.total}, {"parsed", b.parsed}, {"scorer", b.scorer}};
}

}  // namespace tvae
