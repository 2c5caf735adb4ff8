#include "tvae/action.hpp"

#include <charconv>
#include <cmath>

#include "tvae/errors.hpp"

namespace tvae {

using nlohmann::json;

std::string_view to_string(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::Click: return "click";
    case ActionKind::LongPress: return "long_press";
    case ActionKind::Scroll: return "scroll";
    case ActionKind::InputText: return "input_text";
    case ActionKind::NavigateBack: return "navigate_back";
    case ActionKind::OpenApp: return "open_app";
    case ActionKind::Wait: return "wait";
  }
  return "?";
}

std::string_view to_string(Direction dir) noexcept {
  switch (dir) {
    case Direction::Up: return "up";
    case Direction::Down: return "down";
    case Direction::Left: return "left";
    case Direction::Right: return "right";
  }
  return "?";
}

std::optional<ActionKind> parse_action_kind(std::string_view token) noexcept {
  for (ActionKind k : kAllActionKinds) {
    if (to_string(k) == token) return k;
  }
  return std::nullopt;
}

std::optional<Direction> parse_direction(std::string_view token) noexcept {
  for (Direction d : {Direction::Up, Direction::Down, Direction::Left, Direction::Right}) {
    if (to_string(d) == token) return d;
  }
  return std::nullopt;
}

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

double quantize(double v) noexcept {
  double q = std::round(v * 1e6) / 1e6;
  return q == 0.0 ? 0.0 : q;  // no negative zero
}

Point quantize(Point p) noexcept { return {quantize(p.x), quantize(p.y)}; }

std::optional<std::string> presence_problem(const ActionRecord& a) {
  const bool want_coord = is_spatial(a.kind);
  const bool want_dir = a.kind == ActionKind::Scroll;
  const bool want_text = is_textual(a.kind);
  const bool want_secs = a.kind == ActionKind::Wait;
  const std::string k(to_string(a.kind));
  if (want_coord != a.coordinate.has_value())
    return want_coord ? k + " requires a coordinate" : k + " must not carry a coordinate";
  if (want_dir != a.direction.has_value())
    return want_dir ? k + " requires a direction" : k + " must not carry a direction";
  if (want_text != a.text.has_value()) return want_text ? k + " requires text" : k + " must not carry text";
  if (want_secs != a.seconds.has_value())
    return want_secs ? k + " requires seconds" : k + " must not carry seconds";
  return std::nullopt;
}

std::optional<std::string> shape_problem(const ActionRecord& a) {
  if (auto p = presence_problem(a)) return p;
  const std::string k(to_string(a.kind));
  if (a.coordinate && !(std::isfinite(a.coordinate->x) && std::isfinite(a.coordinate->y)))
    return std::string("coordinate must be finite");
  if (a.text && a.text->empty()) return k + " text must be non-empty";
  if (a.seconds && !(std::isfinite(*a.seconds) && *a.seconds >= 0.0)) return std::string("seconds must be >= 0");
  return std::nullopt;
}

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "0";
  return std::string(buf, end);
}

std::string describe(const ActionRecord& a) {
  std::string out(to_string(a.kind));
  if (a.coordinate) out += " [" + format_number(a.coordinate->x) + ", " + format_number(a.coordinate->y) + "]";
  if (a.direction) out += " " + std::string(to_string(*a.direction));
  if (a.text) out += " '" + *a.text + "'";
  if (a.seconds) out += " " + format_number(*a.seconds) + "s";
  return out;
}

json action_to_json(const ActionRecord& a) {
  json j;
  j["kind"] = std::string(to_string(a.kind));
  if (a.coordinate) j["coordinate"] = json::array({a.coordinate->x, a.coordinate->y});
  if (a.direction) j["direction"] = std::string(to_string(*a.direction));
  if (a.text) j["text"] = *a.text;
  if (a.seconds) j["seconds"] = *a.seconds;
  return j;
}

namespace {

double number_at(const json& j, const char* what) {
  if (!j.is_number()) throw SchemaError(std::string(what) + " must be a number");
  return j.get<double>();
}

}  // namespace

ActionRecord action_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("action must be an object");
  auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw SchemaError("action.kind missing or not a string");
  const auto kind = parse_action_kind(kind_it->get<std::string>());
  if (!kind) throw SchemaError("unknown action kind '" + kind_it->get<std::string>() + "'");

  ActionRecord a;
  a.kind = *kind;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    if (key == "coordinate") {
      if (!value.is_array() || value.size() != 2) throw SchemaError("coordinate must be [x, y]");
      a.coordinate = Point{number_at(value[0], "coordinate[0]"), number_at(value[1], "coordinate[1]")};
    } else if (key == "direction") {
      if (!value.is_string()) throw SchemaError("direction must be a string");
      auto d = parse_direction(value.get<std::string>());
      if (!d) throw SchemaError("unknown direction '" + value.get<std::string>() + "'");
      a.direction = d;
    } else if (key == "text") {
      if (!value.is_string()) throw SchemaError("text must be a string");
      a.text = value.get<std::string>();
    } else if (key == "seconds") {
      a.seconds = number_at(value, "seconds");
    } else {
      throw SchemaError("unexpected action field '" + key + "'");
    }
  }
  if (auto problem = presence_problem(a)) throw SchemaError(*problem);
  return a;
}

}  // namespace tvae
