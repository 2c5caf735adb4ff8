#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvae/agent.hpp"
#include "tvae/codec.hpp"
#include "tvae/failure_forge.hpp"
#include "tvae/reward.hpp"
#include "tvae/trajectory.hpp"

namespace tvae {

struct SimConfig {
  double budget_multiplier = 2.0;
  double delta = 0.14;
  double repeat_epsilon = 0.04;
  std::uint64_t seed = 0;
  TextMatch text_match;

  /// Throws std::invalid_argument.
  void validate() const;
  /// ceil(budget_multiplier * T), ignoring floating-point dust above an integer.
  std::size_t budget_for(std::size_t t_gt) const;
  MatchConfig match() const { return {delta, text_match}; }
};

struct SimState {
  std::size_t cursor = 0;
  std::string screen_ref;
  std::vector<HistoryEntry> history;
  std::size_t attempts_used = 0;
  bool last_attempt_failed = false;
  /// Attempts on the current ground-truth step that did not advance.
  std::size_t failures_on_step = 0;
};

SimState initial_state(const TrajectoryRecord& traj);

struct AttemptLog {
  std::size_t attempt = 0;
  std::size_t gt_step = 0;
  std::optional<ActionRecord> issued;  // empty when the turn was unusable
  bool matched = false;
  bool advanced = false;
  std::optional<Verification> predicted_verification;
  Verification target_verification = Verification::Success;
  std::vector<std::string> warnings;
};

enum class Outcome { CompletedFirstTry, CompletedWithRecovery, BudgetExhausted };
std::string_view to_string(Outcome o) noexcept;
std::optional<Outcome> parse_outcome(std::string_view s) noexcept;

struct SimTrace {
  std::string trajectory_id;
  std::size_t replicate = 0;
  std::vector<AttemptLog> attempts;
  Outcome outcome = Outcome::BudgetExhausted;
  std::size_t steps_used = 0;
  std::size_t t_gt = 0;
  std::size_t final_cursor = 0;
};

/// An agent turn after lenient parsing and pixel-to-relative conversion.
struct AgentTurn {
  std::optional<TvaeOutput> output;  // set only when the turn is usable
  std::vector<std::string> warnings;
};

AgentTurn interpret_turn(std::string_view raw, const std::optional<ScreenDims>& dims);

/// Applies one issued action (nullopt for an unusable turn). Matches advance
/// the cursor; anything else leaves the screen as it was.
/// Throws BudgetExceeded when called with the budget already spent.
std::pair<SimState, AttemptLog> transition(const SimState& state, const TrajectoryRecord& traj,
                                           const AgentTurn& turn, const SimConfig& cfg);

std::uint64_t episode_seed(std::uint64_t seed, std::string_view trajectory_id, std::size_t replicate);

/// One pseudo-online episode. Throws AgentUnavailable / Timeout from the agent.
SimTrace run_episode(const TrajectoryRecord& traj, Agent& agent, const SimConfig& cfg, std::size_t replicate = 0);

struct EpisodeJob {
  std::size_t trajectory = 0;  // index into the trajectory list
  std::size_t replicate = 0;
};

/// `replicates` episodes per trajectory, in (trajectory, replicate) order.
std::vector<EpisodeJob> make_jobs(std::size_t n_trajectories, std::size_t replicates);

std::vector<SimTrace> run_episodes_serial(std::span<const TrajectoryRecord> trajs, std::span<const EpisodeJob> jobs,
                                          Agent& agent, const SimConfig& cfg);
/// Same result as the serial version for any thread count. Serialized agents
/// fall back to the serial loop. The exception of the lowest failing job is rethrown.
std::vector<SimTrace> run_episodes_parallel(std::span<const TrajectoryRecord> trajs, std::span<const EpisodeJob> jobs,
                                            Agent& agent, const SimConfig& cfg, int threads = 0);

struct StepPrediction {
  std::string trajectory_id;
  std::size_t step = 0;
  std::optional<ActionRecord> predicted;  // empty for an unusable turn, which counts as wrong
  StepRecord gt;
};

/// Single-step predictions without simulation: every step is shown its
/// ground-truth screen and ground-truth history.
std::vector<StepPrediction> run_step_eval(const TrajectoryRecord& traj, Agent& agent, const SimConfig& cfg);
std::vector<StepPrediction> run_step_eval_parallel(std::span<const TrajectoryRecord> trajs, Agent& agent,
                                                   const SimConfig& cfg, int threads = 0);

struct FailureResult {
  std::string trajectory_id;
  std::size_t step = 0;
  bool repeated = false;
  bool recovered = false;
  std::optional<ActionRecord> issued;
  std::vector<std::string> warnings;
};

/// Same kind, coordinates within epsilon, same direction and text.
bool repeats_action(const ActionRecord& issued, const ActionRecord& erroneous, double epsilon);

FailureResult run_failure_case(const FailureCase& c, Agent& agent, const SimConfig& cfg);

std::vector<FailureResult> run_failure_cases_serial(std::span<const FailureCase> cases, Agent& agent,
                                                    const SimConfig& cfg);
std::vector<FailureResult> run_failure_cases_parallel(std::span<const FailureCase> cases, Agent& agent,
                                                      const SimConfig& cfg, int threads = 0);

nlohmann::json trace_to_json(const SimTrace& t);
SimTrace trace_from_json(const nlohmann::json& j);
nlohmann::json failure_result_to_json(const FailureResult& r);
FailureResult failure_result_from_json(const nlohmann::json& j);

}  // namespace tvae
