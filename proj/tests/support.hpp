#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tvae/agent.hpp"
#include "tvae/codec.hpp"
#include "tvae/rng.hpp"
#include "tvae/trajectory.hpp"

namespace tvae::testing {

/// A valid random trajectory of length t. Steps cycle through every action
/// kind; about a fifth of the spatial steps have no bbox.
TrajectoryRecord make_trajectory(const std::string& id, std::size_t t, std::uint64_t seed);

/// n trajectories with lengths drawn from [min_len, max_len].
std::vector<TrajectoryRecord> make_dataset(std::size_t n, std::size_t min_len, std::size_t max_len,
                                           std::uint64_t seed);

/// A trajectory whose every step is a click with a bbox.
TrajectoryRecord make_click_trajectory(const std::string& id, std::size_t t);

/// A random output satisfying every grammar invariant, for round-trip fuzzing.
TvaeOutput random_output(Rng& rng);

/// Up to max_len arbitrary bytes, biased toward grammar fragments so the
/// fuzzer reaches deep parser states.
std::string random_bytes(Rng& rng, std::size_t max_len);

std::string read_file(const std::filesystem::path& p);
std::filesystem::path data_dir();

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Always answers with a fixed raw string.
class FixedAgent final : public Agent {
 public:
  explicit FixedAgent(std::string text) : text_(std::move(text)) {}
  std::string identity() const override { return "fixed"; }
  Capability capability() const override { return Capability::ConcurrentSafe; }
  std::string turn(const Observation&, const ScriptContext&) override { return text_; }

 private:
  std::string text_;
};

/// Issues a click at (0.99, 0.01) forever, claiming success.
class AlwaysWrongAgent final : public Agent {
 public:
  std::string identity() const override { return "always-wrong"; }
  Capability capability() const override { return Capability::ConcurrentSafe; }
  std::string turn(const Observation& obs, const ScriptContext& ctx) override;
};

/// Correct on attempt a exactly when bit a of the mask is set; wrong turns
/// click (0.99, 0.01).
class MaskAgent final : public Agent {
 public:
  explicit MaskAgent(std::uint64_t mask) : mask_(mask) {}
  std::string identity() const override { return "mask"; }
  Capability capability() const override { return Capability::ConcurrentSafe; }
  std::string turn(const Observation& obs, const ScriptContext& ctx) override;

 private:
  std::uint64_t mask_;
};

/// Task-level metrics worked out by hand from attempt bit patterns, without
/// the simulator: for each task, its length and the mask of correct attempts.
struct OracleTaskMetrics {
  double tsr, pg, sim_tsr, aso;
};
OracleTaskMetrics oracle_task_metrics(const std::vector<std::pair<std::size_t, std::uint64_t>>& tasks,
                                      double budget_multiplier = 2.0);

}  // namespace tvae::testing
