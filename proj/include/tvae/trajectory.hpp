#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvae/action.hpp"

namespace tvae {

struct ScreenDims {
  int width = 0;
  int height = 0;
  bool operator==(const ScreenDims&) const = default;
};

/// One ground-truth step: the screen shown before the action, the action,
/// and the effect it is known to produce.
struct StepRecord {
  std::size_t index = 0;
  std::string screen_ref;
  std::optional<ScreenDims> screen_dims;
  ActionRecord gt_action;
  std::optional<Box> gt_bbox;
  std::string reference_effect;

  bool operator==(const StepRecord&) const = default;
};

struct TrajectoryRecord {
  std::string id;
  std::string instruction;
  std::vector<StepRecord> steps;
  std::string terminal_screen_ref;
  // Datasets may revisit a screen; such trajectories must say so.
  bool allow_repeat_screens = false;

  std::size_t length() const noexcept { return steps.size(); }
  /// Screen shown after step t succeeds.
  const std::string& screen_after(std::size_t t) const {
    return t + 1 < steps.size() ? steps[t + 1].screen_ref : terminal_screen_ref;
  }

  bool operator==(const TrajectoryRecord&) const = default;
};

struct LoadOptions {
  std::optional<std::size_t> limit;
  /// Drop invalid lines instead of failing; each drop is reported to on_skip.
  bool skip_invalid = false;
  std::function<void(const std::string&)> on_skip;
};

/// Converts pixel coordinates to relative ones. Coordinates already inside
/// [0,1] pass through; non-spatial actions are returned verbatim.
/// Throws MissingDims, NegativeCoordinate, or InvariantViolation when the
/// converted point falls off screen.
ActionRecord normalize_action(const ActionRecord& a, const std::optional<ScreenDims>& dims);

/// Same conversion for a bounding box.
Box normalize_box(const Box& b, const std::optional<ScreenDims>& dims);

/// Checks every trajectory invariant; throws InvariantViolation.
void validate(const TrajectoryRecord& t);

nlohmann::json trajectory_to_json(const TrajectoryRecord& t);
/// Parses, normalizes and validates one record. Schema problems raise
/// SchemaError; the loader attaches the line number.
TrajectoryRecord trajectory_from_json(const nlohmann::json& j);

std::vector<TrajectoryRecord> read_dataset(std::istream& in, const LoadOptions& opts = {});
std::vector<TrajectoryRecord> load_dataset(const std::filesystem::path& path, const LoadOptions& opts = {});

void write_dataset(std::ostream& out, std::span<const TrajectoryRecord> records);
void save_dataset(const std::filesystem::path& path, std::span<const TrajectoryRecord> records);

nlohmann::json dims_to_json(const ScreenDims& d);
ScreenDims dims_from_json(const nlohmann::json& j);
nlohmann::json box_to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);

/// Hex FNV-1a digest of a file's bytes, recorded in run manifests.
std::string file_digest(const std::filesystem::path& path);

}  // namespace tvae
