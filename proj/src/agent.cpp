#include "tvae/agent.hpp"

#include <charconv>
#include <stdexcept>

#include "tvae/errors.hpp"
#include "tvae/rng.hpp"

namespace tvae {

using nlohmann::json;

json observation_to_json(const Observation& obs) {
  json j;
  j["instruction"] = obs.instruction;
  j["screen_ref"] = obs.screen_ref;
  if (obs.screen_asset_path) j["screen_asset_path"] = *obs.screen_asset_path;
  json h = json::array();
  for (const auto& e : obs.history) h.push_back(history_to_json(e));
  j["history"] = std::move(h);
  if (obs.last_expected_effect) j["last_expected_effect"] = *obs.last_expected_effect;
  j["budget_remaining"] = obs.step_budget_remaining;
  return j;
}

Observation observation_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("observation must be an object");
  Observation obs;
  obs.instruction = j.at("instruction").get<std::string>();
  obs.screen_ref = j.at("screen_ref").get<std::string>();
  if (j.contains("screen_asset_path")) obs.screen_asset_path = j["screen_asset_path"].get<std::string>();
  for (const auto& e : j.at("history")) obs.history.push_back(history_from_json(e));
  if (j.contains("last_expected_effect")) obs.last_expected_effect = j["last_expected_effect"].get<std::string>();
  obs.step_budget_remaining = j.at("budget_remaining").get<std::size_t>();
  return obs;
}

ScriptedVariant ScriptedVariant::parse(std::string_view text) {
  ScriptedVariant v;
  auto arg = [&](std::string_view prefix) -> std::optional<std::string_view> {
    if (text.substr(0, prefix.size()) == prefix) return text.substr(prefix.size());
    return std::nullopt;
  };
  if (text == "oracle") {
    v.kind = Kind::Oracle;
  } else if (text == "loopy") {
    v.kind = Kind::Loopy;
  } else if (text == "offset-then-correct") {
    v.kind = Kind::OffsetThenCorrect;
  } else if (auto k = arg("failk:")) {
    v.kind = Kind::FailK;
    auto [ptr, ec] = std::from_chars(k->data(), k->data() + k->size(), v.k);
    if (ec != std::errc() || ptr != k->data() + k->size()) throw std::invalid_argument("bad failk count");
  } else if (auto p = arg("bernoulli:")) {
    v.kind = Kind::Bernoulli;
    try {
      std::size_t used = 0;
      v.p = std::stod(std::string(*p), &used);
      if (used != p->size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::invalid_argument("bad bernoulli probability");
    }
    if (!(v.p >= 0.0 && v.p <= 1.0)) throw std::invalid_argument("bernoulli probability must lie in [0, 1]");
  } else {
    throw std::invalid_argument("unknown scripted variant '" + std::string(text) + "'");
  }
  return v;
}

std::string ScriptedVariant::name() const {
  switch (kind) {
    case Kind::Oracle: return "oracle";
    case Kind::Loopy: return "loopy";
    case Kind::FailK: return "failk:" + std::to_string(k);
    case Kind::Bernoulli: return "bernoulli:" + format_number(p);
    case Kind::OffsetThenCorrect: return "offset-then-correct";
  }
  return "?";
}

namespace {

std::string one_line(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(c == '\n' || c == '\r' || c == '<' ? ' ' : c);
  std::size_t b = out.find_first_not_of(' ');
  if (b == std::string::npos) return "No visible change is described.";
  std::size_t e = out.find_last_not_of(' ');
  return out.substr(b, e - b + 1);
}

std::optional<ThinkSegment> parameter_segment(const ActionRecord& a, bool corrected) {
  const std::string lead = corrected ? "Corrected " : "";
  if (a.coordinate)
    return ThinkSegment{ThinkTag::Coordinate, lead + "element position: (" + format_number(a.coordinate->x) + ", " +
                                                  format_number(a.coordinate->y) + ")."};
  if (a.direction) return ThinkSegment{ThinkTag::Direction, lead + "scroll direction: " + std::string(to_string(*a.direction)) + "."};
  if (a.text) return ThinkSegment{ThinkTag::Text, "The exact text is given in the action."};
  return std::nullopt;
}

}  // namespace

std::string compose_turn(const ActionRecord& action, Verification verification, std::string_view expected_effect,
                         bool first_turn) {
  TvaeOutput out;
  const std::string kind(to_string(action.kind));
  if (verification == Verification::Success) {
    if (!first_turn) out.think.push_back({ThinkTag::Verify, "The previous action produced the expected screen."});
    out.think.push_back({ThinkTag::Recall, "Continue with the assigned task."});
    out.think.push_back({ThinkTag::Grounding, "The target for the next " + kind + " is located."});
    if (auto seg = parameter_segment(action, false)) out.think.push_back(*seg);
    out.think.push_back({ThinkTag::Action, "Perform " + kind + "."});
  } else {
    out.think.push_back({ThinkTag::Verify, "The screen remains unchanged after the previous action."});
    out.think.push_back({ThinkTag::Diagnose, "The previous action did not take effect."});
    out.think.push_back({ThinkTag::Recall, "Restate the task goal and continue."});
    out.think.push_back({ThinkTag::Grounding, "The correct target for " + kind + " is located."});
    if (auto seg = parameter_segment(action, true)) out.think.push_back(*seg);
    out.think.push_back({ThinkTag::Recovery, "Execute " + kind + " instead."});
  }
  out.verification = verification;
  out.action = action;
  out.coordinate_space = infer_space(action);
  out.expected_effect = one_line(expected_effect);
  return emit_tvae(out);
}

std::string scripted_turn(const ScriptedVariant& variant, const Observation& obs, const ScriptContext& ctx,
                          const ForgeConfig& forge) {
  if (ctx.gt == nullptr) throw std::invalid_argument("scripted agents need ground truth");
  const StepRecord& gt = *ctx.gt;
  const bool first_turn = obs.history.empty();
  const Verification honest = ctx.failures_on_step > 0 ? Verification::NoChange : Verification::Success;
  Rng rng(mix_seed(ctx.episode_seed, ctx.attempt));

  auto correct = [&] { return compose_turn(gt.gt_action, honest, gt.reference_effect, first_turn); };
  auto corrupted = [&](Verification v) {
    const Corruption c = draw_corruption(gt.gt_action, gt.gt_bbox, rng, forge);
    return compose_turn(c.action, v, mismatched_effect(c.action), first_turn);
  };

  switch (variant.kind) {
    case ScriptedVariant::Kind::Oracle: return correct();
    case ScriptedVariant::Kind::Loopy:
      // Re-issues the last action forever and always claims success.
      if (!obs.history.empty()) {
        const HistoryEntry& last = obs.history.back();
        return compose_turn(last.action, Verification::Success, last.expected_effect, false);
      }
      return corrupted(Verification::Success);
    case ScriptedVariant::Kind::FailK: return ctx.failures_on_step < variant.k ? corrupted(honest) : correct();
    case ScriptedVariant::Kind::Bernoulli: return rng.bernoulli(variant.p) ? correct() : corrupted(honest);
    case ScriptedVariant::Kind::OffsetThenCorrect:
      if (ctx.failures_on_step > 0) return correct();
      if (is_spatial(gt.gt_action.kind)) {
        const ActionRecord off = corrupt_action(gt.gt_action, gt.gt_bbox, FailureMode::CoordinateOffset, rng, forge);
        return compose_turn(off, honest, mismatched_effect(off), first_turn);
      }
      return corrupted(honest);
  }
  return correct();
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::unique_ptr<Agent> make_agent(std::string_view spec, const AgentOptions& opts) {
  if (spec.substr(0, 9) == "scripted:")
    return std::make_unique<ScriptedAgent>(ScriptedVariant::parse(spec.substr(9)), opts.forge);
  if (spec.substr(0, 7) == "remote:") {
    Endpoint ep = Endpoint::parse(spec.substr(7));
    ep.bearer_token = opts.bearer_token;
    ep.timeout_seconds = opts.timeout_seconds;
    ep.max_in_flight = opts.max_in_flight;
    return std::make_unique<RemoteAgent>(std::move(ep), opts.templates);
  }
  if (spec.substr(0, 6) == "stdio:")
    return std::make_unique<SubprocessAgent>(std::string(spec.substr(6)), opts.templates, opts.timeout_seconds);
  throw std::invalid_argument("unknown agent spec '" + std::string(spec) + "'");
}

}  // namespace tvae
