#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvae/codec.hpp"
#include "tvae/reward.hpp"
#include "tvae/rng.hpp"
#include "tvae/trajectory.hpp"

namespace tvae {

enum class FailureMode { CoordinateOffset, ActionTypeError, TargetMisidentification, TimingError, NullClick };

inline constexpr std::size_t kFailureModeCount = 5;
inline constexpr FailureMode kAllFailureModes[kFailureModeCount] = {
    FailureMode::CoordinateOffset, FailureMode::ActionTypeError, FailureMode::TargetMisidentification,
    FailureMode::TimingError, FailureMode::NullClick};

std::string_view to_string(FailureMode m) noexcept;
std::optional<FailureMode> parse_failure_mode(std::string_view token) noexcept;

/// Sampling weights indexed in kAllFailureModes order.
struct FailureWeights {
  std::array<double, kFailureModeCount> w{0.30, 0.25, 0.20, 0.15, 0.10};

  /// Non-negative, summing to 1 within 1e-9. Throws std::invalid_argument.
  void validate() const;
};

struct ForgeConfig {
  FailureWeights weights;
  MatchConfig match;
  /// Kind substitutions for ActionTypeError.
  std::map<ActionKind, ActionKind> related_kinds{
      {ActionKind::Click, ActionKind::LongPress}, {ActionKind::LongPress, ActionKind::Click},
      {ActionKind::Scroll, ActionKind::Click},    {ActionKind::InputText, ActionKind::Click},
      {ActionKind::OpenApp, ActionKind::Click},   {ActionKind::Wait, ActionKind::Click}};
  /// Width of the screen border used by NullClick.
  double margin_frame = 0.03;
  /// How far beyond the bbox edge (or delta) a CoordinateOffset lands.
  double offset_min = 0.01;
  double offset_max = 0.05;
  /// Minimum distance of a TargetMisidentification jump, in multiples of delta.
  double misidentify_factor = 2.0;
  int placement_tries = 256;
  int max_redraws = 64;
};

FailureMode sample_mode(const FailureWeights& weights, Rng& rng);

/// A plausible but wrong version of gt under one failure mode. The result
/// never satisfies match_action against gt. Throws ModeInapplicable.
ActionRecord corrupt_action(const ActionRecord& gt, const std::optional<Box>& bbox, FailureMode mode, Rng& rng,
                            const ForgeConfig& cfg = {});

struct Corruption {
  FailureMode mode;
  ActionRecord action;
};

/// sample_mode + corrupt_action, redrawing the mode while it is inapplicable.
Corruption draw_corruption(const ActionRecord& gt, const std::optional<Box>& bbox, Rng& rng,
                           const ForgeConfig& cfg = {});

/// Template effect text for an erroneous action.
std::string mismatched_effect(const ActionRecord& erroneous);

enum class SampleType { TypeA, TypeB };
std::string_view to_string(SampleType t) noexcept;

struct SyntheticSample {
  SampleType sample_type = SampleType::TypeA;
  std::string trajectory_id;
  std::size_t step = 0;
  std::string instruction;
  std::string input_screen_ref;
  std::optional<ScreenDims> screen_dims;
  std::vector<HistoryEntry> history;
  Verification target_verification = Verification::Success;
  ActionRecord target_action;
  std::optional<Box> target_bbox;
  std::string target_effect;
  std::optional<FailureMode> failure_mode;

  bool operator==(const SyntheticSample&) const = default;
};

/// One robustness-slice input: the screen the erroneous action was issued
/// on, a history claiming that action ran, and the correct action.
struct FailureCase {
  std::string trajectory_id;
  std::size_t step = 0;
  std::string instruction;
  std::string screen_ref;
  std::optional<ScreenDims> screen_dims;
  std::vector<HistoryEntry> history;  // ends with the erroneous action
  ActionRecord gt_recovery;
  std::optional<Box> gt_bbox;
  ActionRecord erroneous;
  FailureMode mode = FailureMode::CoordinateOffset;

  bool operator==(const FailureCase&) const = default;
};

/// Ground-truth history before step t: each earlier action with its reference effect.
std::vector<HistoryEntry> ground_truth_history(const TrajectoryRecord& t, std::size_t step);

/// One TypeA sample per step, plus TypeB samples for round-half-up(ratio_b * steps)
/// distinct steps chosen at random.
std::vector<SyntheticSample> build_sft_dataset(std::span<const TrajectoryRecord> trajs, double ratio_b,
                                               std::uint64_t seed, const ForgeConfig& cfg = {});

/// min(per_traj, T) failure cases per trajectory from distinct steps.
std::vector<FailureCase> build_robustness_bench(std::span<const TrajectoryRecord> trajs, std::size_t per_traj,
                                                std::uint64_t seed, const ForgeConfig& cfg = {});

nlohmann::json sample_to_json(const SyntheticSample& s);
SyntheticSample sample_from_json(const nlohmann::json& j);
nlohmann::json failure_case_to_json(const FailureCase& c);
FailureCase failure_case_from_json(const nlohmann::json& j);

std::vector<SyntheticSample> read_samples(const std::filesystem::path& path);
std::vector<FailureCase> read_failure_cases(const std::filesystem::path& path);

nlohmann::json weights_to_json(const FailureWeights& w);

}  // namespace tvae
