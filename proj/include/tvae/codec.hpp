#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tvae/action.hpp"

namespace tvae {

// Closed vocabulary of think tags.
enum class ThinkTag { Verify, Recall, Grounding, Coordinate, Direction, Text, Action, Diagnose, Recovery };

inline constexpr ThinkTag kAllThinkTags[] = {ThinkTag::Verify,    ThinkTag::Recall,   ThinkTag::Grounding,
                                             ThinkTag::Coordinate, ThinkTag::Direction, ThinkTag::Text,
                                             ThinkTag::Action,    ThinkTag::Diagnose, ThinkTag::Recovery};

std::string_view to_string(ThinkTag tag) noexcept;
std::optional<ThinkTag> parse_think_tag(std::string_view name) noexcept;

struct ThinkSegment {
  ThinkTag tag = ThinkTag::Verify;
  std::string body;
  bool operator==(const ThinkSegment&) const = default;
};

enum class Verification { Success, NoChange };

std::string_view to_string(Verification v) noexcept;  // "SUCCESS" / "NO_CHANGE"
std::optional<Verification> parse_verification(std::string_view token) noexcept;

/// How the action's coordinate was expressed. Decided by magnitude: any
/// component above 1.0 means pixels.
enum class CoordinateSpace { Relative, Pixel, Unknown };

std::string_view to_string(CoordinateSpace s) noexcept;
CoordinateSpace infer_space(const ActionRecord& a) noexcept;

/// One parsed agent turn: think segments, verification, action, expected effect.
struct TvaeOutput {
  std::vector<ThinkSegment> think;
  Verification verification = Verification::Success;
  ActionRecord action;
  CoordinateSpace coordinate_space = CoordinateSpace::Unknown;
  std::string expected_effect;

  bool operator==(const TvaeOutput&) const = default;
};

/// What the harness remembers about an earlier turn.
struct HistoryEntry {
  ActionRecord action;
  std::string expected_effect;
  Verification verification = Verification::Success;
  bool operator==(const HistoryEntry&) const = default;
};

enum class ParseMode { Strict, Lenient };

enum class ParseErrorKind { MissingBlock, MalformedActionJson, UnknownVerification, UnknownActionKind };

struct ParseFailure {
  ParseErrorKind kind = ParseErrorKind::MissingBlock;
  std::string detail;
};

struct ParseResult {
  std::optional<TvaeOutput> output;
  /// Broken TvaeOutput invariants (empty in strict mode, which throws instead).
  std::vector<std::string> violations;
  /// Soft findings that do not invalidate the turn.
  std::vector<std::string> warnings;
  /// Set when no output could be produced (lenient mode only).
  std::optional<ParseFailure> failure;

  bool usable() const noexcept { return output.has_value() && violations.empty(); }
};

/// Parses the four-block grammar in any block order.
/// Strict mode throws MissingBlock / MalformedActionJson / UnknownVerification /
/// UnknownActionKind / InvariantViolation. Lenient mode never throws.
ParseResult parse_tvae(std::string_view raw, ParseMode mode = ParseMode::Strict);

/// Canonical text: think, verification, action, expected_effect, one think
/// segment per line. Throws InvariantViolation for invalid outputs.
std::string emit_tvae(const TvaeOutput& out);

enum class ReasoningPath { SuccessPath, RecoveryPath };
ReasoningPath classify_path(const TvaeOutput& out) noexcept;

/// Every invariant the output breaks; empty when valid.
std::vector<std::string> invariant_violations(const TvaeOutput& out);

/// The action body as it appears inside <action>, e.g.
/// {"action": "click", "coordinate": [317, 1190]}.
std::string action_to_tvae_json(const ActionRecord& a);
/// Throws MalformedActionJson or UnknownActionKind.
ActionRecord action_from_tvae_json(std::string_view body);

nlohmann::json history_to_json(const HistoryEntry& h);
HistoryEntry history_from_json(const nlohmann::json& j);

}  // namespace tvae
