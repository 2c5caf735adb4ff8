#include "tvae/codec.hpp"

#include <array>
#include <cctype>

#include "tvae/errors.hpp"

namespace tvae {

using nlohmann::json;

std::string_view to_string(ThinkTag tag) noexcept {
  switch (tag) {
    case ThinkTag::Verify: return "Verify";
    case ThinkTag::Recall: return "Recall";
    case ThinkTag::Grounding: return "Grounding";
    case ThinkTag::Coordinate: return "Coordinate";
    case ThinkTag::Direction: return "Direction";
    case ThinkTag::Text: return "Text";
    case ThinkTag::Action: return "Action";
    case ThinkTag::Diagnose: return "Diagnose";
    case ThinkTag::Recovery: return "Recovery";
  }
  return "?";
}

std::optional<ThinkTag> parse_think_tag(std::string_view name) noexcept {
  for (ThinkTag t : kAllThinkTags)
    if (to_string(t) == name) return t;
  return std::nullopt;
}

std::string_view to_string(Verification v) noexcept { return v == Verification::Success ? "SUCCESS" : "NO_CHANGE"; }

std::optional<Verification> parse_verification(std::string_view token) noexcept {
  if (token == "SUCCESS") return Verification::Success;
  if (token == "NO_CHANGE") return Verification::NoChange;
  return std::nullopt;
}

std::string_view to_string(CoordinateSpace s) noexcept {
  switch (s) {
    case CoordinateSpace::Relative: return "relative";
    case CoordinateSpace::Pixel: return "pixel";
    case CoordinateSpace::Unknown: return "unknown";
  }
  return "?";
}

CoordinateSpace infer_space(const ActionRecord& a) noexcept {
  if (!a.coordinate) return CoordinateSpace::Unknown;
  return (a.coordinate->x > 1.0 || a.coordinate->y > 1.0) ? CoordinateSpace::Pixel : CoordinateSpace::Relative;
}

ReasoningPath classify_path(const TvaeOutput& out) noexcept {
  return out.verification == Verification::Success ? ReasoningPath::SuccessPath : ReasoningPath::RecoveryPath;
}

namespace {

constexpr std::array<std::string_view, 4> kBlockNames = {"think", "verification", "action", "expected_effect"};
enum BlockIndex { kThink = 0, kVerification = 1, kAction = 2, kEffect = 3 };

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool blank(std::string_view s) { return trim(s).empty(); }

std::string open_tag(std::string_view name) { return "<" + std::string(name) + ">"; }
std::string close_tag(std::string_view name) { return "</" + std::string(name) + ">"; }

struct ScannedBlocks {
  std::array<std::optional<std::string_view>, 4> body;
  std::vector<std::string> duplicates;
  std::vector<std::string> warnings;
};

ScannedBlocks scan_blocks(std::string_view raw) {
  ScannedBlocks out;
  std::size_t pos = 0;
  bool stray = false;
  while (pos < raw.size()) {
    std::size_t best = std::string_view::npos;
    std::size_t which = 0;
    for (std::size_t i = 0; i < kBlockNames.size(); ++i) {
      std::size_t p = raw.find(open_tag(kBlockNames[i]), pos);
      if (p < best) {
        best = p;
        which = i;
      }
    }
    if (best == std::string_view::npos) break;
    if (!blank(raw.substr(pos, best - pos))) stray = true;
    const std::size_t content = best + kBlockNames[which].size() + 2;
    const std::string close = close_tag(kBlockNames[which]);
    const std::size_t end = raw.find(close, content);
    if (end == std::string_view::npos) {
      out.warnings.push_back("unterminated <" + std::string(kBlockNames[which]) + "> block");
      pos = raw.size();
      break;
    }
    if (out.body[which])
      out.duplicates.push_back("duplicate <" + std::string(kBlockNames[which]) + "> block; first one kept");
    else
      out.body[which] = raw.substr(content, end - content);
    pos = end + close.size();
  }
  if (pos < raw.size() && !blank(raw.substr(pos))) stray = true;
  if (stray) out.warnings.push_back("text outside the four TVAE blocks ignored");
  return out;
}

bool at_line_start(std::string_view s, std::size_t p) {
  while (p > 0) {
    char c = s[p - 1];
    if (c == '\n') return true;
    if (c != ' ' && c != '\t' && c != '\r') return false;
    --p;
  }
  return true;
}

bool looks_like_tag_name(std::string_view name) {
  if (name.empty() || name.size() > 32 || !std::isalpha(static_cast<unsigned char>(name.front()))) return false;
  for (char c : name)
    if (!(std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '/' || c == ' ')) return false;
  return true;
}

// Unknown tags and untagged leading text break the closed vocabulary: a
// violation in strict mode, a warning in lenient mode.
void parse_think(std::string_view content, std::vector<ThinkSegment>& segments, std::vector<std::string>& findings) {
  std::optional<ThinkTag> current;
  std::size_t body_start = 0;
  auto close_segment = [&](std::size_t end) {
    std::string_view body = trim(content.substr(body_start, end - body_start));
    if (current)
      segments.push_back({*current, std::string(body)});
    else if (!body.empty())
      findings.push_back("think text before the first tag dropped");
  };

  std::size_t p = 0;
  while ((p = content.find('[', p)) != std::string_view::npos) {
    const std::size_t q = content.find(']', p + 1);
    if (q == std::string_view::npos) break;
    const std::string_view name = content.substr(p + 1, q - p - 1);
    if (auto tag = parse_think_tag(name)) {
      close_segment(p);
      current = tag;
      body_start = q + 1;
      p = q + 1;
      continue;
    }
    if (looks_like_tag_name(name) && at_line_start(content, p))
      findings.push_back("unknown think tag [" + std::string(name) + "] kept as body text");
    p = p + 1;
  }
  close_segment(content.size());
}

}  // namespace

std::vector<std::string> invariant_violations(const TvaeOutput& out) {
  std::vector<std::string> v;
  if (out.think.empty()) v.push_back("think has no segments");
  bool has_verify = false;
  bool has_recovery_tag = false;
  for (const auto& s : out.think) {
    if (blank(s.body)) v.push_back("empty body for [" + std::string(to_string(s.tag)) + "]");
    has_verify |= s.tag == ThinkTag::Verify;
    has_recovery_tag |= s.tag == ThinkTag::Diagnose || s.tag == ThinkTag::Recovery;
  }
  if (has_verify && out.think.front().tag != ThinkTag::Verify) v.push_back("[Verify] present but not first");
  if (out.verification == Verification::NoChange && !has_recovery_tag)
    v.push_back("NO_CHANGE without [Diagnose] or [Recovery]");
  if (blank(out.expected_effect)) v.push_back("expected_effect is empty");
  if (auto problem = shape_problem(out.action)) v.push_back("action: " + *problem);
  if (out.coordinate_space != infer_space(out.action))
    v.push_back("coordinate_space " + std::string(to_string(out.coordinate_space)) + " disagrees with the action");
  if (out.action.coordinate) {
    const Point p = *out.action.coordinate;
    if (p.x < 0.0 || p.y < 0.0) v.push_back("negative coordinate");
  }
  return v;
}

std::string action_to_tvae_json(const ActionRecord& a) {
  std::string s = "{\"action\": \"" + std::string(to_string(a.kind)) + "\"";
  if (a.coordinate) s += ", \"coordinate\": [" + format_number(a.coordinate->x) + ", " + format_number(a.coordinate->y) + "]";
  if (a.direction) s += ", \"direction\": \"" + std::string(to_string(*a.direction)) + "\"";
  if (a.text) s += ", \"text\": " + json(*a.text).dump();
  if (a.seconds) s += ", \"time\": " + format_number(*a.seconds);
  s += "}";
  return s;
}

ActionRecord action_from_tvae_json(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw MalformedActionJson(e.what());
  }
  if (!j.is_object()) throw MalformedActionJson("action body is not an object");
  auto kind_it = j.find("action");
  if (kind_it == j.end()) kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw MalformedActionJson("missing \"action\" string");
  const std::string token = kind_it->get<std::string>();
  const auto kind = parse_action_kind(token);
  if (!kind) throw UnknownActionKind(token);

  ActionRecord a;
  a.kind = *kind;
  switch (a.kind) {
    case ActionKind::Click:
    case ActionKind::LongPress: {
      auto it = j.find("coordinate");
      if (it == j.end() || !it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
        throw MalformedActionJson("\"coordinate\" must be [x, y]");
      a.coordinate = Point{(*it)[0].get<double>(), (*it)[1].get<double>()};
      break;
    }
    case ActionKind::Scroll: {
      auto it = j.find("direction");
      if (it == j.end() || !it->is_string()) throw MalformedActionJson("\"direction\" must be a string");
      a.direction = parse_direction(it->get<std::string>());
      if (!a.direction) throw MalformedActionJson("unknown direction '" + it->get<std::string>() + "'");
      break;
    }
    case ActionKind::InputText:
    case ActionKind::OpenApp: {
      auto it = j.find("text");
      if (it == j.end() && a.kind == ActionKind::OpenApp) it = j.find("app_name");
      if (it == j.end() || !it->is_string()) throw MalformedActionJson("\"text\" must be a string");
      a.text = it->get<std::string>();
      break;
    }
    case ActionKind::Wait: {
      auto it = j.find("time");
      if (it == j.end()) it = j.find("seconds");
      if (it == j.end() || !it->is_number()) throw MalformedActionJson("wait needs a numeric \"time\"");
      a.seconds = it->get<double>();
      break;
    }
    case ActionKind::NavigateBack: break;
  }
  return a;
}

ParseResult parse_tvae(std::string_view raw, ParseMode mode) {
  ParseResult result;
  ScannedBlocks blocks = scan_blocks(raw);
  result.warnings = std::move(blocks.warnings);
  result.violations = std::move(blocks.duplicates);

  auto fail = [&](ParseErrorKind kind, std::string detail) -> ParseResult {
    ParseFailure f{kind, std::move(detail)};
    if (mode == ParseMode::Strict) {
      switch (kind) {
        case ParseErrorKind::MissingBlock: throw MissingBlock(f.detail);
        case ParseErrorKind::MalformedActionJson: throw MalformedActionJson(f.detail);
        case ParseErrorKind::UnknownVerification: throw UnknownVerification(f.detail);
        case ParseErrorKind::UnknownActionKind: throw UnknownActionKind(f.detail);
      }
    }
    result.output.reset();
    result.failure = std::move(f);
    return std::move(result);
  };

  for (std::size_t i = 0; i < kBlockNames.size(); ++i)
    if (!blocks.body[i]) return fail(ParseErrorKind::MissingBlock, std::string(kBlockNames[i]));

  TvaeOutput out;
  parse_think(*blocks.body[kThink], out.think,
              mode == ParseMode::Strict ? result.violations : result.warnings);

  const std::string_view verification = trim(*blocks.body[kVerification]);
  if (auto v = parse_verification(verification))
    out.verification = *v;
  else
    return fail(ParseErrorKind::UnknownVerification, std::string(verification));

  try {
    out.action = action_from_tvae_json(trim(*blocks.body[kAction]));
  } catch (const UnknownActionKind& e) {
    if (mode == ParseMode::Strict) throw;
    return fail(ParseErrorKind::UnknownActionKind, e.token());
  } catch (const MalformedActionJson& e) {
    if (mode == ParseMode::Strict) throw;
    return fail(ParseErrorKind::MalformedActionJson, e.what());
  }
  out.coordinate_space = infer_space(out.action);
  out.expected_effect = std::string(trim(*blocks.body[kEffect]));

  for (auto& v : invariant_violations(out)) result.violations.push_back(std::move(v));
  if (out.verification == Verification::Success) {
    for (const auto& s : out.think) {
      if (s.tag == ThinkTag::Diagnose || s.tag == ThinkTag::Recovery) {
        result.warnings.push_back("SUCCESS verification alongside recovery tags");
        break;
      }
    }
  }
  if (mode == ParseMode::Strict && !result.violations.empty())
    throw InvariantViolation("tvae output", "structure", result.violations.front());
  result.output = std::move(out);
  return result;
}

namespace {

bool contains_delimiter(std::string_view s) {
  for (auto name : kBlockNames)
    if (s.find(open_tag(name)) != std::string_view::npos || s.find(close_tag(name)) != std::string_view::npos)
      return true;
  return false;
}

bool contains_think_tag(std::string_view s) {
  for (ThinkTag t : kAllThinkTags)
    if (s.find("[" + std::string(to_string(t)) + "]") != std::string_view::npos) return true;
  return false;
}

}  // namespace

std::string emit_tvae(const TvaeOutput& out) {
  if (auto v = invariant_violations(out); !v.empty()) throw InvariantViolation("tvae output", "structure", v.front());

  std::string s = "<think>\n";
  for (const auto& seg : out.think) {
    if (seg.body != trim(seg.body) || seg.body.find_first_of("\r\n") != std::string::npos ||
        contains_delimiter(seg.body) || contains_think_tag(seg.body))
      throw InvariantViolation("tvae output", "think", "segment body cannot be emitted canonically");
    s += "[" + std::string(to_string(seg.tag)) + "] " + seg.body + "\n";
  }
  s += "</think>\n<verification>" + std::string(to_string(out.verification)) + "</verification>\n";

  std::string action;
  try {
    action = action_to_tvae_json(out.action);
  } catch (const json::exception& e) {
    throw InvariantViolation("tvae output", "action", e.what());
  }
  if (contains_delimiter(action)) throw InvariantViolation("tvae output", "action", "text contains a block delimiter");
  s += "<action>" + action + "</action>\n";

  if (out.expected_effect != trim(out.expected_effect) || contains_delimiter(out.expected_effect))
    throw InvariantViolation("tvae output", "expected_effect", "cannot be emitted canonically");
  s += "<expected_effect>" + out.expected_effect + "</expected_effect>";
  return s;
}

json history_to_json(const HistoryEntry& h) {
  json j;
  j["action"] = action_to_json(h.action);
  j["expected_effect"] = h.expected_effect;
  j["verification"] = std::string(to_string(h.verification));
  return j;
}

HistoryEntry history_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("history entry must be an object");
  HistoryEntry h;
  auto a = j.find("action");
  if (a == j.end()) throw SchemaError("history entry missing action");
  h.action = action_from_json(*a);
  auto e = j.find("expected_effect");
  if (e == j.end() || !e->is_string()) throw SchemaError("history entry missing expected_effect");
  h.expected_effect = e->get<std::string>();
  auto v = j.find("verification");
  if (v == j.end() || !v->is_string()) throw SchemaError("history entry missing verification");
  auto parsed = parse_verification(v->get<std::string>());
  if (!parsed) throw SchemaError("bad verification '" + v->get<std::string>() + "'");
  h.verification = *parsed;
  return h;
}

}  // namespace tvae
