#include "tvae/failure_forge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "tvae/errors.hpp"
#include "tvae/jsonl.hpp"

namespace tvae {

using nlohmann::json;

std::string_view to_string(FailureMode m) noexcept {
  switch (m) {
    case FailureMode::CoordinateOffset: return "coordinate_offset";
    case FailureMode::ActionTypeError: return "action_type_error";
    case FailureMode::TargetMisidentification: return "target_misidentification";
    case FailureMode::TimingError: return "timing_error";
    case FailureMode::NullClick: return "null_click";
  }
  return "?";
}

std::optional<FailureMode> parse_failure_mode(std::string_view token) noexcept {
  for (FailureMode m : kAllFailureModes)
    if (to_string(m) == token) return m;
  return std::nullopt;
}

std::string_view to_string(SampleType t) noexcept { return t == SampleType::TypeA ? "TypeA" : "TypeB"; }

void FailureWeights::validate() const {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("failure weights must be non-negative");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("failure weights must sum to 1");
}

FailureMode sample_mode(const FailureWeights& weights, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < kFailureModeCount; ++i) {
    if (weights.w[i] <= 0.0) continue;
    last_positive = i;
    cum += weights.w[i];
    if (u < cum) return kAllFailureModes[i];
  }
  return kAllFailureModes[last_positive];  // rounding slack at the top end
}

namespace {

[[noreturn]] void inapplicable(FailureMode mode, ActionKind kind) {
  throw ModeInapplicable(std::string(to_string(mode)), std::string(to_string(kind)));
}

bool on_screen(Point p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

// Distance from p (inside box) to the box edge along the unit direction (dx, dy).
double exit_distance(const Box& b, Point p, double dx, double dy) {
  const double inf = std::numeric_limits<double>::infinity();
  const double tx = dx > 0 ? (b.x1 - p.x) / dx : dx < 0 ? (b.x0 - p.x) / dx : inf;
  const double ty = dy > 0 ? (b.y1 - p.y) / dy : dy < 0 ? (b.y0 - p.y) / dy : inf;
  return std::max(0.0, std::min(tx, ty));
}

ActionRecord offset_click(const ActionRecord& gt, const std::optional<Box>& bbox, Rng& rng, const ForgeConfig& cfg) {
  const Point start = *gt.coordinate;
  for (int i = 0; i < cfg.placement_tries; ++i) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    double reach = cfg.match.delta;
    if (bbox) reach = bbox->contains(start) ? exit_distance(*bbox, start, dx, dy) : 0.0;
    const double d = reach + rng.uniform(cfg.offset_min, cfg.offset_max);
    ActionRecord out = gt;
    out.coordinate = quantize(Point{start.x + d * dx, start.y + d * dy});
    if (on_screen(*out.coordinate) && !match_action(out, gt, bbox, cfg.match)) return out;
  }
  inapplicable(FailureMode::CoordinateOffset, gt.kind);
}

ActionRecord retype(const ActionRecord& gt, const std::optional<Box>& bbox, Rng& rng, const ForgeConfig& cfg) {
  auto it = cfg.related_kinds.find(gt.kind);
  if (it == cfg.related_kinds.end() || it->second == gt.kind) inapplicable(FailureMode::ActionTypeError, gt.kind);
  ActionRecord out;
  out.kind = it->second;
  if (is_spatial(out.kind)) {
    Point p = gt.coordinate ? *gt.coordinate : bbox ? bbox->center() : Point{0.5, 0.5};
    out.coordinate = quantize(p);
  }
  if (out.kind == ActionKind::Scroll) {
    static constexpr Direction dirs[] = {Direction::Up, Direction::Down, Direction::Left, Direction::Right};
    out.direction = dirs[rng.index(4)];
  }
  if (is_textual(out.kind)) out.text = gt.text.value_or("search");
  if (out.kind == ActionKind::Wait) out.seconds = 2.0;
  return out;
}

ActionRecord misidentify(const ActionRecord& gt, const std::optional<Box>& bbox, Rng& rng, const ForgeConfig& cfg) {
  const double min_jump = cfg.misidentify_factor * cfg.match.delta;
  for (int i = 0; i < cfg.placement_tries; ++i) {
    const Point p = quantize(Point{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)});
    if (distance(p, *gt.coordinate) < min_jump) continue;
    if (bbox && bbox->contains(p)) continue;
    ActionRecord out = gt;
    out.coordinate = p;
    if (!match_action(out, gt, bbox, cfg.match)) return out;
  }
  inapplicable(FailureMode::TargetMisidentification, gt.kind);
}

ActionRecord null_click(const ActionRecord& gt, const std::optional<Box>& bbox, Rng& rng, const ForgeConfig& cfg) {
  const double m = cfg.margin_frame;
  for (int i = 0; i < cfg.placement_tries; ++i) {
    Point p;
    switch (rng.index(4)) {
      case 0: p = {rng.uniform(0.0, m), rng.uniform(0.0, 1.0)}; break;
      case 1: p = {rng.uniform(1.0 - m, 1.0), rng.uniform(0.0, 1.0)}; break;
      case 2: p = {rng.uniform(0.0, 1.0), rng.uniform(0.0, m)}; break;
      default: p = {rng.uniform(0.0, 1.0), rng.uniform(1.0 - m, 1.0)}; break;
    }
    p = quantize(p);
    if (bbox && bbox->contains(p)) continue;
    ActionRecord out = ActionRecord::click(p);
    if (!match_action(out, gt, bbox, cfg.match)) return out;
  }
  inapplicable(FailureMode::NullClick, gt.kind);
}

}  // namespace

ActionRecord corrupt_action(const ActionRecord& gt, const std::optional<Box>& bbox, FailureMode mode, Rng& rng,
                            const ForgeConfig& cfg) {
  switch (mode) {
    case FailureMode::CoordinateOffset:
      if (!is_spatial(gt.kind) || !gt.coordinate) inapplicable(mode, gt.kind);
      return offset_click(gt, bbox, rng, cfg);
    case FailureMode::ActionTypeError: return retype(gt, bbox, rng, cfg);
    case FailureMode::TargetMisidentification:
      if (!is_spatial(gt.kind) || !gt.coordinate) inapplicable(mode, gt.kind);
      return misidentify(gt, bbox, rng, cfg);
    case FailureMode::TimingError: {
      if (gt.kind == ActionKind::Wait) inapplicable(mode, gt.kind);
      static constexpr double waits[] = {1.0, 2.0, 3.0, 5.0};
      return ActionRecord::wait(waits[rng.index(4)]);
    }
    case FailureMode::NullClick: return null_click(gt, bbox, rng, cfg);
  }
  inapplicable(mode, gt.kind);
}

Corruption draw_corruption(const ActionRecord& gt, const std::optional<Box>& bbox, Rng& rng, const ForgeConfig& cfg) {
  for (int attempt = 0; attempt < cfg.max_redraws; ++attempt) {
    const FailureMode mode = sample_mode(cfg.weights, rng);
    try {
      return {mode, corrupt_action(gt, bbox, mode, rng, cfg)};
    } catch (const ModeInapplicable&) {
      // redraw
    }
  }
  throw ModeInapplicable("any", std::string(to_string(gt.kind)));
}

std::string mismatched_effect(const ActionRecord& erroneous) {
  return "The screen will show the result of " + describe(erroneous) + ".";
}

std::vector<HistoryEntry> ground_truth_history(const TrajectoryRecord& t, std::size_t step) {
  std::vector<HistoryEntry> h;
  h.reserve(step);
  for (std::size_t i = 0; i < step && i < t.steps.size(); ++i)
    h.push_back({t.steps[i].gt_action, t.steps[i].reference_effect, Verification::Success});
  return h;
}

namespace {

// First k entries of a seeded Fisher-Yates shuffle of 0..n-1, sorted.
std::vector<std::size_t> choose_distinct(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<SyntheticSample> build_sft_dataset(std::span<const TrajectoryRecord> trajs, double ratio_b,
                                               std::uint64_t seed, const ForgeConfig& cfg) {
  if (!(ratio_b >= 0.0 && ratio_b <= 1.0)) throw std::invalid_argument("ratio_b must lie in [0, 1]");
  cfg.weights.validate();
  std::vector<std::pair<std::size_t, std::size_t>> steps;
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (std::size_t j = 0; j < trajs[i].steps.size(); ++j) steps.emplace_back(i, j);
  if (steps.empty()) throw EmptyDataset();

  const auto n_b = static_cast<std::size_t>(std::floor(ratio_b * static_cast<double>(steps.size()) + 0.5));
  Rng selector(mix_seed(seed, fnv1a64("type-b-selection")));
  const auto chosen = choose_distinct(steps.size(), n_b, selector);

  std::vector<SyntheticSample> out;
  out.reserve(steps.size() + chosen.size());
  std::size_t next_chosen = 0;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto [ti, j] = steps[s];
    const TrajectoryRecord& t = trajs[ti];
    const StepRecord& step = t.steps[j];

    SyntheticSample a;
    a.sample_type = SampleType::TypeA;
    a.trajectory_id = t.id;
    a.step = j;
    a.instruction = t.instruction;
    a.input_screen_ref = step.screen_ref;
    a.screen_dims = step.screen_dims;
    a.history = ground_truth_history(t, j);
    a.target_verification = Verification::Success;
    a.target_action = step.gt_action;
    a.target_bbox = step.gt_bbox;
    a.target_effect = step.reference_effect;
    out.push_back(a);

    if (next_chosen < chosen.size() && chosen[next_chosen] == s) {
      ++next_chosen;
      Rng rng(mix_seed(child_seed(seed, t.id), j));
      const Corruption c = draw_corruption(step.gt_action, step.gt_bbox, rng, cfg);
      SyntheticSample b = std::move(a);
      b.sample_type = SampleType::TypeB;
      b.history.push_back({c.action, mismatched_effect(c.action), Verification::Success});
      b.target_verification = Verification::NoChange;
      b.failure_mode = c.mode;
      out.push_back(std::move(b));
    }
  }
  return out;
}

std::vector<FailureCase> build_robustness_bench(std::span<const TrajectoryRecord> trajs, std::size_t per_traj,
                                                std::uint64_t seed, const ForgeConfig& cfg) {
  if (per_traj == 0) throw std::invalid_argument("per_traj must be at least 1");
  cfg.weights.validate();
  std::vector<FailureCase> out;
  for (const TrajectoryRecord& t : trajs) {
    Rng rng(child_seed(seed, t.id));
    for (std::size_t j : choose_distinct(t.steps.size(), per_traj, rng)) {
      const StepRecord& step = t.steps[j];
      const Corruption c = draw_corruption(step.gt_action, step.gt_bbox, rng, cfg);
      FailureCase fc;
      fc.trajectory_id = t.id;
      fc.step = j;
      fc.instruction = t.instruction;
      fc.screen_ref = step.screen_ref;
      fc.screen_dims = step.screen_dims;
      fc.history = ground_truth_history(t, j);
      fc.history.push_back({c.action, mismatched_effect(c.action), Verification::Success});
      fc.gt_recovery = step.gt_action;
      fc.gt_bbox = step.gt_bbox;
      fc.erroneous = c.action;
      fc.mode = c.mode;
      out.push_back(std::move(fc));
    }
  }
  if (out.empty()) throw EmptyDataset();
  return out;
}

namespace {

json history_array(const std::vector<HistoryEntry>& h) {
  json a = json::array();
  for (const auto& e : h) a.push_back(history_to_json(e));
  return a;
}

std::vector<HistoryEntry> history_vector(const json& j) {
  if (!j.is_array()) throw SchemaError("history must be an array");
  std::vector<HistoryEntry> h;
  for (const auto& e : j) h.push_back(history_from_json(e));
  return h;
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::size_t index_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_unsigned()) throw SchemaError(std::string("field '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

Verification verification_field(const json& j, const char* key) {
  auto v = parse_verification(string_field(j, key));
  if (!v) throw SchemaError(std::string("field '") + key + "' must be SUCCESS or NO_CHANGE");
  return *v;
}

FailureMode mode_field(const json& j, const char* key) {
  auto m = parse_failure_mode(string_field(j, key));
  if (!m) throw SchemaError(std::string("unknown failure mode in '") + key + "'");
  return *m;
}

}  // namespace

json sample_to_json(const SyntheticSample& s) {
  json j;
  j["sample_type"] = std::string(to_string(s.sample_type));
  j["trajectory_id"] = s.trajectory_id;
  j["step"] = s.step;
  j["instruction"] = s.instruction;
  j["input_screen_ref"] = s.input_screen_ref;
  if (s.screen_dims) j["screen_dims"] = dims_to_json(*s.screen_dims);
  j["history"] = history_array(s.history);
  j["target_verification"] = std::string(to_string(s.target_verification));
  j["target_action"] = action_to_json(s.target_action);
  if (s.target_bbox) j["target_bbox"] = box_to_json(*s.target_bbox);
  j["target_effect"] = s.target_effect;
  if (s.failure_mode) j["failure_mode"] = std::string(to_string(*s.failure_mode));
  return j;
}

SyntheticSample sample_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("sample must be an object");
  SyntheticSample s;
  const std::string type = string_field(j, "sample_type");
  if (type == "TypeA")
    s.sample_type = SampleType::TypeA;
  else if (type == "TypeB")
    s.sample_type = SampleType::TypeB;
  else
    throw SchemaError("sample_type must be TypeA or TypeB");
  s.trajectory_id = string_field(j, "trajectory_id");
  s.step = index_field(j, "step");
  s.instruction = string_field(j, "instruction");
  s.input_screen_ref = string_field(j, "input_screen_ref");
  if (j.contains("screen_dims")) s.screen_dims = dims_from_json(j["screen_dims"]);
  s.history = history_vector(field(j, "history"));
  s.target_verification = verification_field(j, "target_verification");
  s.target_action = action_from_json(field(j, "target_action"));
  if (j.contains("target_bbox")) s.target_bbox = box_from_json(j["target_bbox"]);
  s.target_effect = string_field(j, "target_effect");
  if (j.contains("failure_mode")) s.failure_mode = mode_field(j, "failure_mode");
  const bool type_b = s.sample_type == SampleType::TypeB;
  if (type_b != (s.target_verification == Verification::NoChange))
    throw SchemaError("TypeA targets SUCCESS and TypeB targets NO_CHANGE");
  return s;
}

json failure_case_to_json(const FailureCase& c) {
  json j;
  j["trajectory_id"] = c.trajectory_id;
  j["step"] = c.step;
  j["instruction"] = c.instruction;
  j["screen_ref"] = c.screen_ref;
  if (c.screen_dims) j["screen_dims"] = dims_to_json(*c.screen_dims);
  j["history"] = history_array(c.history);
  j["gt_recovery"] = action_to_json(c.gt_recovery);
  if (c.gt_bbox) j["gt_bbox"] = box_to_json(*c.gt_bbox);
  j["erroneous"] = action_to_json(c.erroneous);
  j["mode"] = std::string(to_string(c.mode));
  return j;
}

FailureCase failure_case_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("failure case must be an object");
  FailureCase c;
  c.trajectory_id = string_field(j, "trajectory_id");
  c.step = index_field(j, "step");
  c.instruction = string_field(j, "instruction");
  c.screen_ref = string_field(j, "screen_ref");
  if (j.contains("screen_dims")) c.screen_dims = dims_from_json(j["screen_dims"]);
  c.history = history_vector(field(j, "history"));
  c.gt_recovery = action_from_json(field(j, "gt_recovery"));
  if (j.contains("gt_bbox")) c.gt_bbox = box_from_json(j["gt_bbox"]);
  c.erroneous = action_from_json(field(j, "erroneous"));
  c.mode = mode_field(j, "mode");
  if (c.history.empty() || !(c.history.back().action == c.erroneous))
    throw SchemaError("history must end with the erroneous action");
  return c;
}

std::vector<SyntheticSample> read_samples(const std::filesystem::path& path) {
  return read_jsonl<SyntheticSample>(path, [](const json& j) { return sample_from_json(j); });
}

std::vector<FailureCase> read_failure_cases(const std::filesystem::path& path) {
  return read_jsonl<FailureCase>(path, [](const json& j) { return failure_case_from_json(j); });
}

json weights_to_json(const FailureWeights& w) {
  json j;
  for (std::size_t i = 0; i < kFailureModeCount; ++i) j[std::string(to_string(kAllFailureModes[i]))] = w.w[i];
  return j;
}

}  // namespace tvae
