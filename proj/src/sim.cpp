#include "tvae/sim.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <stdexcept>

#include "tvae/errors.hpp"
#include "tvae/rng.hpp"

namespace tvae {

using nlohmann::json;

void SimConfig::validate() const {
  if (!(budget_multiplier >= 1.0) || !std::isfinite(budget_multiplier))
    throw std::invalid_argument("budget_multiplier must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(repeat_epsilon >= 0.0 && repeat_epsilon < delta))
    throw std::invalid_argument("repeat_epsilon must lie in [0, delta)");
  if (text_match.mode == TextMatchMode::TokenF1Threshold && !(text_match.threshold >= 0.0 && text_match.threshold <= 1.0))
    throw std::invalid_argument("text match threshold must lie in [0, 1]");
}

std::size_t SimConfig::budget_for(std::size_t t_gt) const {
  const double raw = budget_multiplier * static_cast<double>(t_gt);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
}

SimState initial_state(const TrajectoryRecord& traj) {
  SimState s;
  s.screen_ref = traj.steps.empty() ? traj.terminal_screen_ref : traj.steps.front().screen_ref;
  return s;
}

std::string_view to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::CompletedFirstTry: return "completed_first_try";
    case Outcome::CompletedWithRecovery: return "completed_with_recovery";
    case Outcome::BudgetExhausted: return "budget_exhausted";
  }
  return "?";
}

std::optional<Outcome> parse_outcome(std::string_view s) noexcept {
  for (Outcome o : {Outcome::CompletedFirstTry, Outcome::CompletedWithRecovery, Outcome::BudgetExhausted})
    if (to_string(o) == s) return o;
  return std::nullopt;
}

AgentTurn interpret_turn(std::string_view raw, const std::optional<ScreenDims>& dims) {
  AgentTurn turn;
  ParseResult parsed = parse_tvae(raw, ParseMode::Lenient);
  turn.warnings = std::move(parsed.warnings);
  if (parsed.failure) {
    turn.warnings.push_back("unparseable turn: " + parsed.failure->detail);
    return turn;
  }
  if (!parsed.violations.empty()) {
    for (auto& v : parsed.violations) turn.warnings.push_back("invalid turn: " + v);
    return turn;
  }
  TvaeOutput out = std::move(*parsed.output);
  if (out.coordinate_space == CoordinateSpace::Pixel) {
    if (!dims) {
      turn.warnings.push_back("pixel coordinates without screen dimensions");
      return turn;
    }
    try {
      out.action = normalize_action(out.action, dims);
      out.coordinate_space = CoordinateSpace::Relative;
    } catch (const DataError& e) {
      turn.warnings.push_back(std::string("coordinate off screen: ") + e.what());
      return turn;
    }
  }
  turn.output = std::move(out);
  return turn;
}

std::pair<SimState, AttemptLog> transition(const SimState& state, const TrajectoryRecord& traj,
                                           const AgentTurn& turn, const SimConfig& cfg) {
  if (state.attempts_used >= cfg.budget_for(traj.length())) throw BudgetExceeded();
  if (state.cursor >= traj.length()) throw std::logic_error("transition called on a finished episode");
  const StepRecord& gt = traj.steps[state.cursor];

  AttemptLog log;
  log.attempt = state.attempts_used;
  log.gt_step = state.cursor;
  log.target_verification = state.last_attempt_failed ? Verification::NoChange : Verification::Success;
  log.warnings = turn.warnings;

  SimState next = state;
  next.attempts_used += 1;
  if (turn.output) {
    const TvaeOutput& out = *turn.output;
    log.issued = out.action;
    log.predicted_verification = out.verification;
    log.matched = match_action(out.action, gt.gt_action, gt.gt_bbox, cfg.match());
    next.history.push_back({out.action, out.expected_effect, out.verification});
  }
  if (log.matched) {
    log.advanced = true;
    next.screen_ref = traj.screen_after(state.cursor);
    next.cursor += 1;
    next.failures_on_step = 0;
    next.last_attempt_failed = false;
  } else {
    next.failures_on_step += 1;
    next.last_attempt_failed = true;
  }
  return {std::move(next), std::move(log)};
}

std::uint64_t episode_seed(std::uint64_t seed, std::string_view trajectory_id, std::size_t replicate) {
  return mix_seed(child_seed(seed, trajectory_id), replicate);
}

SimTrace run_episode(const TrajectoryRecord& traj, Agent& agent, const SimConfig& cfg, std::size_t replicate) {
  const std::size_t t_gt = traj.length();
  const std::size_t budget = cfg.budget_for(t_gt);
  const std::uint64_t seed = episode_seed(cfg.seed, traj.id, replicate);

  SimTrace trace;
  trace.trajectory_id = traj.id;
  trace.replicate = replicate;
  trace.t_gt = t_gt;

  SimState state = initial_state(traj);
  bool all_matched = true;
  while (state.cursor < t_gt && state.attempts_used < budget) {
    const StepRecord& gt = traj.steps[state.cursor];
    Observation obs;
    obs.instruction = traj.instruction;
    obs.screen_ref = state.screen_ref;
    obs.history = state.history;
    if (!state.history.empty()) obs.last_expected_effect = state.history.back().expected_effect;
    obs.step_budget_remaining = budget - state.attempts_used;

    ScriptContext ctx{&gt, state.failures_on_step, seed, state.attempts_used};
    const AgentTurn turn = interpret_turn(agent.turn(obs, ctx), gt.screen_dims);
    auto [next, log] = transition(state, traj, turn, cfg);
    all_matched = all_matched && log.matched;
    trace.attempts.push_back(std::move(log));
    state = std::move(next);
  }

  trace.steps_used = state.attempts_used;
  trace.final_cursor = state.cursor;
  if (state.cursor < t_gt)
    trace.outcome = Outcome::BudgetExhausted;
  else
    trace.outcome = all_matched ? Outcome::CompletedFirstTry : Outcome::CompletedWithRecovery;
  return trace;
}

std::vector<EpisodeJob> make_jobs(std::size_t n_trajectories, std::size_t replicates) {
  std::vector<EpisodeJob> jobs;
  jobs.reserve(n_trajectories * replicates);
  for (std::size_t i = 0; i < n_trajectories; ++i)
    for (std::size_t r = 0; r < replicates; ++r) jobs.push_back({i, r});
  return jobs;
}

std::vector<SimTrace> run_episodes_serial(std::span<const TrajectoryRecord> trajs, std::span<const EpisodeJob> jobs,
                                          Agent& agent, const SimConfig& cfg) {
  std::vector<SimTrace> out;
  out.reserve(jobs.size());
  for (const EpisodeJob& j : jobs) out.push_back(run_episode(trajs[j.trajectory], agent, cfg, j.replicate));
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) across OpenMP threads and rethrows the exception
// of the smallest failing index.
template <class Fn>
void parallel_for_each(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 64) num_threads(nthreads)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<SimTrace> run_episodes_parallel(std::span<const TrajectoryRecord> trajs, std::span<const EpisodeJob> jobs,
                                            Agent& agent, const SimConfig& cfg, int threads) {
  if (agent.capability() == Capability::Serialized) return run_episodes_serial(trajs, jobs, agent, cfg);
  std::vector<SimTrace> out(jobs.size());
  parallel_for_each(jobs.size(), threads, [&](std::size_t i) {
    out[i] = run_episode(trajs[jobs[i].trajectory], agent, cfg, jobs[i].replicate);
  });
  return out;
}

std::vector<StepPrediction> run_step_eval(const TrajectoryRecord& traj, Agent& agent, const SimConfig& cfg) {
  const std::size_t budget = cfg.budget_for(traj.length());
  const std::uint64_t seed = child_seed(cfg.seed, traj.id);
  std::vector<StepPrediction> out;
  out.reserve(traj.length());
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const StepRecord& gt = traj.steps[t];
    Observation obs;
    obs.instruction = traj.instruction;
    obs.screen_ref = gt.screen_ref;
    obs.history = ground_truth_history(traj, t);
    if (!obs.history.empty()) obs.last_expected_effect = obs.history.back().expected_effect;
    obs.step_budget_remaining = budget - t;
    ScriptContext ctx{&gt, 0, mix_seed(seed, ~static_cast<std::uint64_t>(t)), 0};
    const AgentTurn turn = interpret_turn(agent.turn(obs, ctx), gt.screen_dims);
    std::optional<ActionRecord> predicted;
    if (turn.output) predicted = turn.output->action;
    out.push_back({traj.id, t, std::move(predicted), gt});
  }
  return out;
}

std::vector<StepPrediction> run_step_eval_parallel(std::span<const TrajectoryRecord> trajs, Agent& agent,
                                                   const SimConfig& cfg, int threads) {
  std::vector<std::vector<StepPrediction>> per(trajs.size());
  if (agent.capability() == Capability::Serialized) {
    for (std::size_t i = 0; i < trajs.size(); ++i) per[i] = run_step_eval(trajs[i], agent, cfg);
  } else {
    parallel_for_each(trajs.size(), threads, [&](std::size_t i) { per[i] = run_step_eval(trajs[i], agent, cfg); });
  }
  std::vector<StepPrediction> out;
  for (auto& v : per)
    for (auto& p : v) out.push_back(std::move(p));
  return out;
}

bool repeats_action(const ActionRecord& issued, const ActionRecord& erroneous, double epsilon) {
  if (issued.kind != erroneous.kind) return false;
  if (issued.coordinate.has_value() != erroneous.coordinate.has_value()) return false;
  if (issued.coordinate && distance(*issued.coordinate, *erroneous.coordinate) > epsilon) return false;
  if (issued.direction != erroneous.direction) return false;
  if (issued.text.has_value() != erroneous.text.has_value()) return false;
  if (issued.text && normalize_text(*issued.text) != normalize_text(*erroneous.text)) return false;
  return true;
}

FailureResult run_failure_case(const FailureCase& c, Agent& agent, const SimConfig& cfg) {
  StepRecord gt;
  gt.index = c.step;
  gt.screen_ref = c.screen_ref;
  gt.screen_dims = c.screen_dims;
  gt.gt_action = c.gt_recovery;
  gt.gt_bbox = c.gt_bbox;
  gt.reference_effect = mismatched_effect(c.gt_recovery);

  Observation obs;
  obs.instruction = c.instruction;
  obs.screen_ref = c.screen_ref;
  obs.history = c.history;
  if (!c.history.empty()) obs.last_expected_effect = c.history.back().expected_effect;
  obs.step_budget_remaining = 1;

  // The case stands for a screen that did not change, so one failure is on record.
  ScriptContext ctx{&gt, 1, mix_seed(child_seed(cfg.seed, c.trajectory_id), c.step), 0};
  const AgentTurn turn = interpret_turn(agent.turn(obs, ctx), c.screen_dims);

  FailureResult r;
  r.trajectory_id = c.trajectory_id;
  r.step = c.step;
  r.warnings = turn.warnings;
  if (turn.output) {
    const ActionRecord& a = turn.output->action;
    r.issued = a;
    r.recovered = match_action(a, c.gt_recovery, c.gt_bbox, cfg.match());
    r.repeated = !r.recovered && repeats_action(a, c.erroneous, cfg.repeat_epsilon);
  }
  return r;
}

std::vector<FailureResult> run_failure_cases_serial(std::span<const FailureCase> cases, Agent& agent,
                                                    const SimConfig& cfg) {
  std::vector<FailureResult> out;
  out.reserve(cases.size());
  for (const FailureCase& c : cases) out.push_back(run_failure_case(c, agent, cfg));
  return out;
}

std::vector<FailureResult> run_failure_cases_parallel(std::span<const FailureCase> cases, Agent& agent,
                                                      const SimConfig& cfg, int threads) {
  if (agent.capability() == Capability::Serialized) return run_failure_cases_serial(cases, agent, cfg);
  std::vector<FailureResult> out(cases.size());
  parallel_for_each(cases.size(), threads, [&](std::size_t i) { out[i] = run_failure_case(cases[i], agent, cfg); });
  return out;
}

json trace_to_json(const SimTrace& t) {
  json attempts = json::array();
  for (const AttemptLog& a : t.attempts) {
    json j;
    j["attempt"] = a.attempt;
    j["gt_step"] = a.gt_step;
    j["issued"] = a.issued ? action_to_json(*a.issued) : json(nullptr);
    j["matched"] = a.matched;
    j["advanced"] = a.advanced;
    j["predicted_verification"] =
        a.predicted_verification ? json(std::string(to_string(*a.predicted_verification))) : json(nullptr);
    j["target_verification"] = std::string(to_string(a.target_verification));
    j["warnings"] = a.warnings;
    attempts.push_back(std::move(j));
  }
  json j;
  j["trajectory_id"] = t.trajectory_id;
  j["replicate"] = t.replicate;
  j["outcome"] = std::string(to_string(t.outcome));
  j["steps_used"] = t.steps_used;
  j["t_gt"] = t.t_gt;
  j["final_cursor"] = t.final_cursor;
  j["attempts"] = std::move(attempts);
  return j;
}

SimTrace trace_from_json(const json& j) {
  SimTrace t;
  try {
    t.trajectory_id = j.at("trajectory_id").get<std::string>();
    t.replicate = j.at("replicate").get<std::size_t>();
    auto outcome = parse_outcome(j.at("outcome").get<std::string>());
    if (!outcome) throw SchemaError("unknown outcome");
    t.outcome = *outcome;
    t.steps_used = j.at("steps_used").get<std::size_t>();
    t.t_gt = j.at("t_gt").get<std::size_t>();
    t.final_cursor = j.at("final_cursor").get<std::size_t>();
    for (const json& a : j.at("attempts")) {
      AttemptLog log;
      log.attempt = a.at("attempt").get<std::size_t>();
      log.gt_step = a.at("gt_step").get<std::size_t>();
      if (!a.at("issued").is_null()) log.issued = action_from_json(a["issued"]);
      log.matched = a.at("matched").get<bool>();
      log.advanced = a.at("advanced").get<bool>();
      if (!a.at("predicted_verification").is_null()) {
        auto v = parse_verification(a["predicted_verification"].get<std::string>());
        if (!v) throw SchemaError("bad predicted_verification");
        log.predicted_verification = v;
      }
      auto target = parse_verification(a.at("target_verification").get<std::string>());
      if (!target) throw SchemaError("bad target_verification");
      log.target_verification = *target;
      log.warnings = a.at("warnings").get<std::vector<std::string>>();
      t.attempts.push_back(std::move(log));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("trace: ") + e.what());
  }
  return t;
}

json failure_result_to_json(const FailureResult& r) {
  json j;
  j["trajectory_id"] = r.trajectory_id;
  j["step"] = r.step;
  j["repeated"] = r.repeated;
  j["recovered"] = r.recovered;
  j["issued"] = r.issued ? action_to_json(*r.issued) : json(nullptr);
  j["warnings"] = r.warnings;
  return j;
}

FailureResult failure_result_from_json(const json& j) {
  FailureResult r;
  try {
    r.trajectory_id = j.at("trajectory_id").get<std::string>();
    r.step = j.at("step").get<std::size_t>();
    r.repeated = j.at("repeated").get<bool>();
    r.recovered = j.at("recovered").get<bool>();
    if (!j.at("issued").is_null()) r.issued = action_from_json(j["issued"]);
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("failure result: ") + e.what());
  }
  return r;
}

}  // namespace tvae
