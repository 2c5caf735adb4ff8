#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tvae/reward.hpp"
#include "tvae/sim.hpp"
#include "tvae/trajectory.hpp"

namespace tvae {

/// One prediction per simulated attempt, paired with the step it was aimed at.
std::vector<StepPrediction> predictions_from_traces(std::span<const TrajectoryRecord> trajs,
                                                    std::span<const SimTrace> traces);

struct StepMetrics {
  double tm = 0.0;
  /// Over steps whose ground truth is spatial or textual; empty when there are none.
  std::optional<double> gr;
  /// The same, restricted to steps with the right kind.
  std::optional<double> gr_given_tm;
  double sr = 0.0;
  std::size_t n = 0;
  std::size_t n_grounding = 0;
  std::size_t n_grounding_tm = 0;
};

struct TaskMetrics {
  double tsr = 0.0;
  double pg = 0.0;
  double sim_tsr = 0.0;
  /// +infinity when no task completed.
  double aso = 0.0;
  std::size_t n = 0;
  std::size_t n_completed = 0;
};

struct RobustnessMetrics {
  double lr = 0.0;
  double rsr = 0.0;
  std::size_t n = 0;
};

/// Ground-truth steps cleared before the first failed attempt.
std::size_t prefix_correct(const SimTrace& t);

/// Throw EmptySet on empty input.
StepMetrics step_metrics(std::span<const StepPrediction> preds, const MatchConfig& cfg);
StepMetrics step_metrics_parallel(std::span<const StepPrediction> preds, const MatchConfig& cfg, int threads = 0);
TaskMetrics task_metrics(std::span<const SimTrace> traces);
TaskMetrics task_metrics_parallel(std::span<const SimTrace> traces, int threads = 0);
RobustnessMetrics robustness_metrics(std::span<const FailureResult> results);
RobustnessMetrics robustness_metrics_parallel(std::span<const FailureResult> results, int threads = 0);

struct MetricsReport {
  std::optional<StepMetrics> step;
  std::optional<TaskMetrics> task;
  std::optional<RobustnessMetrics> robustness;
};

enum class ReportFormat { Json, Csv, Markdown };
std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept;

/// Deterministic serialization. JSON and CSV write "inf" for an infinite ASO.
std::string emit_report(const MetricsReport& r, ReportFormat format);
nlohmann::json report_to_json(const MetricsReport& r);
/// Throws SchemaError.
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace tvae
