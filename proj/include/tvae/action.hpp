#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace tvae {

enum class ActionKind { Click, LongPress, Scroll, InputText, NavigateBack, OpenApp, Wait };
enum class Direction { Up, Down, Left, Right };

inline constexpr ActionKind kAllActionKinds[] = {ActionKind::Click,        ActionKind::LongPress,
                                                 ActionKind::Scroll,       ActionKind::InputText,
                                                 ActionKind::NavigateBack, ActionKind::OpenApp,
                                                 ActionKind::Wait};

std::string_view to_string(ActionKind kind) noexcept;
std::string_view to_string(Direction dir) noexcept;
std::optional<ActionKind> parse_action_kind(std::string_view token) noexcept;
std::optional<Direction> parse_direction(std::string_view token) noexcept;

/// Kinds that carry a screen coordinate.
constexpr bool is_spatial(ActionKind k) noexcept { return k == ActionKind::Click || k == ActionKind::LongPress; }
/// Kinds that carry a text argument.
constexpr bool is_textual(ActionKind k) noexcept { return k == ActionKind::InputText || k == ActionKind::OpenApp; }

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Axis-aligned box, relative coordinates, closed on all sides.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool contains(Point p) const noexcept { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  Point center() const noexcept { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
  bool operator==(const Box&) const = default;
};

double distance(Point a, Point b) noexcept;

/// Rounds to 6 decimals: the canonical precision of relative coordinates.
double quantize(double v) noexcept;
Point quantize(Point p) noexcept;

/// One GUI action. Which optional fields are populated is dictated by `kind`;
/// see `shape_problem`.
struct ActionRecord {
  ActionKind kind = ActionKind::Wait;
  std::optional<Point> coordinate;   // click, long_press
  std::optional<Direction> direction;  // scroll
  std::optional<std::string> text;     // input_text, open_app
  std::optional<double> seconds;       // wait

  static ActionRecord click(Point p) { return {ActionKind::Click, p, {}, {}, {}}; }
  static ActionRecord long_press(Point p) { return {ActionKind::LongPress, p, {}, {}, {}}; }
  static ActionRecord scroll(Direction d) { return {ActionKind::Scroll, {}, d, {}, {}}; }
  static ActionRecord input_text(std::string t) { return {ActionKind::InputText, {}, {}, std::move(t), {}}; }
  static ActionRecord open_app(std::string t) { return {ActionKind::OpenApp, {}, {}, std::move(t), {}}; }
  static ActionRecord navigate_back() { return {ActionKind::NavigateBack, {}, {}, {}, {}}; }
  static ActionRecord wait(double s) { return {ActionKind::Wait, {}, {}, {}, s}; }

  bool operator==(const ActionRecord&) const = default;
};

/// Empty when exactly the fields demanded by `kind` are populated.
std::optional<std::string> presence_problem(const ActionRecord& a);

/// presence_problem plus value checks (finite coordinate, non-empty text,
/// seconds >= 0). Coordinate range is not checked here.
std::optional<std::string> shape_problem(const ActionRecord& a);

/// Short human-readable rendering, e.g. `click [0.5, 0.875]` or `input_text 'Eastwood'`.
std::string describe(const ActionRecord& a);

/// Shortest decimal text that reads back to the same double; integers carry
/// no fraction ("317"), quantized coordinates at most 6 decimals.
std::string format_number(double v);

/// Dataset form, with "kind" as the discriminator.
nlohmann::json action_to_json(const ActionRecord& a);
/// Throws SchemaError on a structural problem; value invariants are left to
/// the caller (see shape_problem).
ActionRecord action_from_json(const nlohmann::json& j);

}  // namespace tvae
