#include "support.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <iterator>
#include <random>

#include "tvae/codec.hpp"
#include "tvae/rng.hpp"

#ifndef TVAE_TEST_DATA_DIR
#define TVAE_TEST_DATA_DIR "tests/data"
#endif

namespace tvae::testing {

namespace {

const char* const kWords[] = {"coffee", "Eastwood", "bus", "weather today", "Relaxed Sleep", "cart", "maps",
                              "settings", "hello world", "café"};
const char* const kApps[] = {"CityMapper", "Idanim", "Gmail", "Settings", "Spotify"};

const char* const kFragments[] = {"<think>", "</think>", "<verification>", "</verification>", "<action>",
                                  "</action>", "<expected_effect>", "</expected_effect>", "[Verify]", "[Diagnose]",
                                  "[Recovery]", "SUCCESS", "NO_CHANGE", "{\"action\": \"click\"",
                                  "\"coordinate\": [", "]", "}", "\n", "[", "\"", "\\u00e9", "1e999", "-0"};

std::string random_phrase(Rng& rng, std::size_t min_words) {
  static const char* const kPieces[] = {"tap", "the", "Bus", "button", "[maybe]", "42", "x,y", "it's", "\"quoted\"",
                                        "back\\slash", "naïve", "日本", "a/b", "(ok)", "50%", "{braces}", "&amp;"};
  std::string s;
  const std::size_t n = min_words + rng.index(6);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += kPieces[rng.index(std::size(kPieces))];
  }
  return s;
}

ActionRecord random_action(Rng& rng) {
  const ActionKind kind = kAllActionKinds[rng.index(std::size(kAllActionKinds))];
  switch (kind) {
    case ActionKind::Click:
    case ActionKind::LongPress: {
      Point p = rng.bernoulli(0.5) ? Point{quantize(rng.uniform()), quantize(rng.uniform())}
                                   : Point{static_cast<double>(2 + rng.index(1080)), static_cast<double>(2 + rng.index(2400))};
      return kind == ActionKind::Click ? ActionRecord::click(p) : ActionRecord::long_press(p);
    }
    case ActionKind::Scroll: return ActionRecord::scroll(static_cast<Direction>(rng.index(4)));
    case ActionKind::InputText: return ActionRecord::input_text(random_phrase(rng, 1));
    case ActionKind::OpenApp: return ActionRecord::open_app(random_phrase(rng, 1));
    case ActionKind::NavigateBack: return ActionRecord::navigate_back();
    case ActionKind::Wait: return ActionRecord::wait(quantize(rng.uniform(0.0, 10.0)));
  }
  return ActionRecord::navigate_back();
}

}  // namespace

TvaeOutput random_output(Rng& rng) {
  TvaeOutput out;
  out.verification = rng.bernoulli(0.5) ? Verification::Success : Verification::NoChange;
  if (rng.bernoulli(0.7)) out.think.push_back({ThinkTag::Verify, random_phrase(rng, 1)});
  if (out.verification == Verification::NoChange) out.think.push_back({ThinkTag::Diagnose, random_phrase(rng, 1)});
  const std::size_t extra = (out.think.empty() ? 1 : 0) + rng.index(5);
  for (std::size_t i = 0; i < extra; ++i) {
    const ThinkTag tag = kAllThinkTags[1 + rng.index(std::size(kAllThinkTags) - 1)];
    out.think.push_back({tag, random_phrase(rng, 1)});
  }
  out.action = random_action(rng);
  out.coordinate_space = infer_space(out.action);
  out.expected_effect = random_phrase(rng, 1);
  return out;
}

std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s;
  const std::size_t n = rng.index(max_len + 1);
  while (s.size() < n) {
    if (rng.bernoulli(0.3))
      s += kFragments[rng.index(std::size(kFragments))];
    else
      s += static_cast<char>(rng.index(256));
  }
  return s;
}

TrajectoryRecord make_trajectory(const std::string& id, std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  TrajectoryRecord traj;
  traj.id = id;
  traj.instruction = "Complete task " + id;
  for (std::size_t i = 0; i < t; ++i) {
    StepRecord s;
    s.index = i;
    s.screen_ref = id + "/screen_" + std::to_string(i);
    if (rng.bernoulli(0.5)) s.screen_dims = ScreenDims{1080, 2400};
    const ActionKind kind = kAllActionKinds[(i + rng.index(std::size(kAllActionKinds))) % std::size(kAllActionKinds)];
    switch (kind) {
      case ActionKind::Click:
      case ActionKind::LongPress: {
        const Point c{quantize(rng.uniform(0.2, 0.8)), quantize(rng.uniform(0.2, 0.8))};
        s.gt_action = kind == ActionKind::Click ? ActionRecord::click(c) : ActionRecord::long_press(c);
        if (!rng.bernoulli(0.2)) {
          const double hw = quantize(rng.uniform(0.02, 0.1));
          const double hh = quantize(rng.uniform(0.02, 0.1));
          s.gt_bbox = Box{quantize(c.x - hw), quantize(c.y - hh), quantize(c.x + hw), quantize(c.y + hh)};
        }
        break;
      }
      case ActionKind::Scroll:
        s.gt_action = ActionRecord::scroll(static_cast<Direction>(rng.index(4)));
        break;
      case ActionKind::InputText:
        s.gt_action = ActionRecord::input_text(kWords[rng.index(std::size(kWords))]);
        break;
      case ActionKind::OpenApp:
        s.gt_action = ActionRecord::open_app(kApps[rng.index(std::size(kApps))]);
        break;
      case ActionKind::NavigateBack:
        s.gt_action = ActionRecord::navigate_back();
        break;
      case ActionKind::Wait:
        s.gt_action = ActionRecord::wait(static_cast<double>(1 + rng.index(5)));
        break;
    }
    s.reference_effect = "Screen " + std::to_string(i + 1) + " of " + id + " appears after " + describe(s.gt_action) + ".";
    traj.steps.push_back(std::move(s));
  }
  traj.terminal_screen_ref = id + "/screen_end";
  return traj;
}

std::vector<TrajectoryRecord> make_dataset(std::size_t n, std::size_t min_len, std::size_t max_len,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrajectoryRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = min_len + rng.index(max_len - min_len + 1);
    out.push_back(make_trajectory("traj_" + std::to_string(i), t, rng.next()));
  }
  return out;
}

TrajectoryRecord make_click_trajectory(const std::string& id, std::size_t t) {
  TrajectoryRecord traj;
  traj.id = id;
  traj.instruction = "Tap through " + id;
  for (std::size_t i = 0; i < t; ++i) {
    StepRecord s;
    s.index = i;
    s.screen_ref = id + "/s" + std::to_string(i);
    const double y = 0.2 + 0.1 * static_cast<double>(i % 6);
    s.gt_action = ActionRecord::click({0.5, y});
    s.gt_bbox = Box{0.45, y - 0.03, 0.55, y + 0.03};
    s.reference_effect = "Page " + std::to_string(i + 1) + " opens.";
    traj.steps.push_back(std::move(s));
  }
  traj.terminal_screen_ref = id + "/end";
  return traj;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path data_dir() { return TVAE_TEST_DATA_DIR; }

std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 gen(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("tvae_" + tag + "_" + std::to_string(gen()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string AlwaysWrongAgent::turn(const Observation& obs, const ScriptContext&) {
  return compose_turn(ActionRecord::click({0.99, 0.01}), Verification::Success, "Nothing happens.",
                      obs.history.empty());
}

std::string MaskAgent::turn(const Observation& obs, const ScriptContext& ctx) {
  const bool right = (mask_ >> ctx.attempt) & 1u;
  const auto v = ctx.failures_on_step > 0 ? Verification::NoChange : Verification::Success;
  const ActionRecord a = right ? ctx.gt->gt_action : ActionRecord::click({0.99, 0.01});
  return compose_turn(a, v, "Next.", obs.history.empty());
}

OracleTaskMetrics oracle_task_metrics(const std::vector<std::pair<std::size_t, std::uint64_t>>& tasks,
                                      double budget_multiplier) {
  std::size_t first_try = 0, completed = 0, extra = 0;
  double pg = 0.0;
  for (const auto& [t, mask] : tasks) {
    const auto budget = static_cast<std::size_t>(std::ceil(budget_multiplier * static_cast<double>(t) - 1e-9));
    std::size_t done = 0, used = 0;
    while (done < t && used < budget) done += (mask >> used++) & 1u;
    std::size_t leading = 0;
    while (leading < used && ((mask >> leading) & 1u)) ++leading;
    if (done == t) {
      ++completed;
      extra += used - t;
      first_try += used == t;
    }
    pg += static_cast<double>(leading) / static_cast<double>(t);
  }
  const auto n = static_cast<double>(tasks.size());
  return {static_cast<double>(first_try) / n, pg / n, static_cast<double>(completed) / n,
          completed ? static_cast<double>(extra) / static_cast<double>(completed)
                    : std::numeric_limits<double>::infinity()};
}

}  // namespace tvae::testing
