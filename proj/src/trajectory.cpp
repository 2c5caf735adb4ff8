#include "tvae/trajectory.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>

#include "tvae/errors.hpp"
#include "tvae/rng.hpp"

namespace tvae {

using nlohmann::json;

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

ActionRecord normalize_action(const ActionRecord& a, const std::optional<ScreenDims>& dims) {
  if (!a.coordinate) return a;
  const Point p = *a.coordinate;
  if (p.x < 0.0 || p.y < 0.0) throw NegativeCoordinate("negative coordinate in " + describe(a));
  if (p.x <= 1.0 && p.y <= 1.0) return a;
  if (!dims) throw MissingDims("", 0);
  ActionRecord out = a;
  out.coordinate = quantize(Point{p.x / dims->width, p.y / dims->height});
  if (!in_unit(out.coordinate->x) || !in_unit(out.coordinate->y))
    throw InvariantViolation("", "coordinate", describe(a) + " lies outside the " + std::to_string(dims->width) +
                                                   "x" + std::to_string(dims->height) + " screen");
  return out;
}

Box normalize_box(const Box& b, const std::optional<ScreenDims>& dims) {
  if (b.x0 < 0.0 || b.y0 < 0.0 || b.x1 < 0.0 || b.y1 < 0.0) throw NegativeCoordinate("negative bbox component");
  if (b.x0 <= 1.0 && b.y0 <= 1.0 && b.x1 <= 1.0 && b.y1 <= 1.0) return b;
  if (!dims) throw MissingDims("", 0);
  const double w = dims->width;
  const double h = dims->height;
  return Box{quantize(b.x0 / w), quantize(b.y0 / h), quantize(b.x1 / w), quantize(b.y1 / h)};
}

void validate(const TrajectoryRecord& t) {
  if (t.steps.empty()) throw InvariantViolation(t.id, "steps", "trajectory has no steps");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const StepRecord& s = t.steps[i];
    const std::string at = "steps[" + std::to_string(i) + "]";
    if (s.index != i) throw InvariantViolation(t.id, at + ".index", "indices must be contiguous from 0");
    if (s.screen_dims && (s.screen_dims->width <= 0 || s.screen_dims->height <= 0))
      throw InvariantViolation(t.id, at + ".screen_dims", "dimensions must be positive");
    if (auto problem = shape_problem(s.gt_action)) throw InvariantViolation(t.id, at + ".gt_action", *problem);
    if (s.gt_action.coordinate) {
      const Point p = *s.gt_action.coordinate;
      if (!in_unit(p.x) || !in_unit(p.y))
        throw InvariantViolation(t.id, at + ".gt_action.coordinate", "coordinate outside [0,1]");
    }
    if (s.gt_bbox) {
      const Box& b = *s.gt_bbox;
      if (!(0.0 <= b.x0 && b.x0 < b.x1 && b.x1 <= 1.0 && 0.0 <= b.y0 && b.y0 < b.y1 && b.y1 <= 1.0))
        throw InvariantViolation(t.id, at + ".gt_bbox", "box must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1");
    }
    if (s.reference_effect.empty()) throw InvariantViolation(t.id, at + ".reference_effect", "must be non-empty");
    if (!t.allow_repeat_screens && !seen.insert(s.screen_ref).second)
      throw InvariantViolation(t.id, at + ".screen_ref", "repeated screen '" + s.screen_ref +
                                                             "' without allow_repeat_screens");
  }
  if (!t.allow_repeat_screens && seen.count(t.terminal_screen_ref))
    throw InvariantViolation(t.id, "terminal_screen_ref", "repeats a step screen without allow_repeat_screens");
}

json dims_to_json(const ScreenDims& d) { return json::array({d.width, d.height}); }

ScreenDims dims_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw SchemaError("screen_dims must be [width, height] integers");
  return {j[0].get<int>(), j[1].get<int>()};
}

json box_to_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw SchemaError("bbox must be [x0, y0, x1, y1]");
  for (const auto& v : j)
    if (!v.is_number()) throw SchemaError("bbox components must be numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json trajectory_to_json(const TrajectoryRecord& t) {
  json steps = json::array();
  for (const StepRecord& s : t.steps) {
    json js;
    js["index"] = s.index;
    js["screen_ref"] = s.screen_ref;
    if (s.screen_dims) js["screen_dims"] = dims_to_json(*s.screen_dims);
    js["gt_action"] = action_to_json(s.gt_action);
    if (s.gt_bbox) js["gt_bbox"] = box_to_json(*s.gt_bbox);
    js["reference_effect"] = s.reference_effect;
    steps.push_back(std::move(js));
  }
  json j;
  j["id"] = t.id;
  j["instruction"] = t.instruction;
  j["terminal_screen_ref"] = t.terminal_screen_ref;
  if (t.allow_repeat_screens) j["allow_repeat_screens"] = true;
  j["steps"] = std::move(steps);
  return j;
}

TrajectoryRecord trajectory_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("trajectory must be a JSON object");
  TrajectoryRecord t;
  t.id = require_string(j, "id");
  t.instruction = require_string(j, "instruction");
  t.terminal_screen_ref = require_string(j, "terminal_screen_ref");
  if (auto it = j.find("allow_repeat_screens"); it != j.end()) {
    if (!it->is_boolean()) throw SchemaError("allow_repeat_screens must be a boolean");
    t.allow_repeat_screens = it->get<bool>();
  }
  const json& steps = require(j, "steps");
  if (!steps.is_array()) throw SchemaError("steps must be an array");

  for (std::size_t i = 0; i < steps.size(); ++i) {
    const json& js = steps[i];
    if (!js.is_object()) throw SchemaError("step must be an object");
    StepRecord s;
    const json& idx = require(js, "index");
    if (!idx.is_number_integer() || idx.get<long long>() < 0) throw SchemaError("index must be a non-negative integer");
    s.index = idx.get<std::size_t>();
    s.screen_ref = require_string(js, "screen_ref");
    if (auto it = js.find("screen_dims"); it != js.end()) s.screen_dims = dims_from_json(*it);
    s.gt_action = action_from_json(require(js, "gt_action"));
    if (auto it = js.find("gt_bbox"); it != js.end()) s.gt_bbox = box_from_json(*it);
    s.reference_effect = require_string(js, "reference_effect");

    const std::string at = "steps[" + std::to_string(i) + "]";
    if (s.screen_dims && (s.screen_dims->width <= 0 || s.screen_dims->height <= 0))
      throw InvariantViolation(t.id, at + ".screen_dims", "dimensions must be positive");
    try {
      s.gt_action = normalize_action(s.gt_action, s.screen_dims);
      if (s.gt_bbox) s.gt_bbox = normalize_box(*s.gt_bbox, s.screen_dims);
    } catch (const MissingDims&) {
      throw MissingDims(t.id, i);
    } catch (const NegativeCoordinate& e) {
      throw InvariantViolation(t.id, at + ".gt_action", e.what());
    } catch (const InvariantViolation& e) {
      throw InvariantViolation(t.id, at + ".gt_action." + e.field(), e.what());
    }
    t.steps.push_back(std::move(s));
  }
  validate(t);
  return t;
}

std::vector<TrajectoryRecord> read_dataset(std::istream& in, const LoadOptions& opts) {
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (opts.limit && out.size() >= *opts.limit) break;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw MalformedLine(line_no, e.what());
      }
      try {
        out.push_back(trajectory_from_json(j));
      } catch (const SchemaError& e) {
        throw MalformedLine(line_no, e.what());
      } catch (const json::exception& e) {
        throw MalformedLine(line_no, e.what());
      }
    } catch (const DataError& e) {
      if (!opts.skip_invalid) throw;
      if (opts.on_skip) opts.on_skip(e.what());
    }
  }
  return out;
}

std::vector<TrajectoryRecord> load_dataset(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return read_dataset(in, opts);
}

void write_dataset(std::ostream& out, std::span<const TrajectoryRecord> records) {
  for (const auto& t : records) out << trajectory_to_json(t).dump() << '\n';
}

void save_dataset(const std::filesystem::path& path, std::span<const TrajectoryRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, records);
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016" PRIx64, fnv1a64(bytes));
  return buf;
}

}  // namespace tvae
