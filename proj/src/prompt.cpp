#include "tvae/prompt.hpp"

#include <fstream>
#include <iterator>

#include "tvae/errors.hpp"

namespace tvae {

namespace {

constexpr std::string_view kSystemPrompt =
    "You are a GUI Agent that controls mobile apps through visual observation and action execution.\n"
    "\n"
    "Process (in order):\n"
    "1. Think: Analyze the screen, verify previous step, and plan \xE2\x86\x92 <think>...</think>\n"
    "2. Verification: State if previous action succeeded \xE2\x86\x92 <verification>...</verification>\n"
    "3. Action: Output precise action JSON \xE2\x86\x92 <action>{...}</action>\n"
    "4. Prediction: Describe expected screen change \xE2\x86\x92 <expected_effect>...</expected_effect>\n"
    "\n"
    "Available Actions:\n"
    "{\"action\": \"click/scroll/input_text/long_press, ...}\n";

constexpr std::string_view kThinkSuccess =
    "Think Format: SUCCESS Path\n"
    "[Verify] Confirm previous action result\n"
    "[Recall] Brief task reminder\n"
    "[Grounding] Locate target with visual description\n"
    "[Coord/Dir/Text] State action parameters\n"
    "[Action] State intended action\n";

constexpr std::string_view kThinkNoChange =
    "Think Format: NO_CHANGE Path (Error Recovery)\n"
    "[Verify] Note unchanged screen state\n"
    "[Diagnose] Identify why previous action failed\n"
    "[Recall] Restate task goal\n"
    "[Grounding] Locate correct target\n"
    "[Coord/Dir/Text] State corrected parameters\n"
    "[Recovery] State recovery action\n";

constexpr std::string_view kUserTurn =
    "User Instruction: {{instruction}}\n"
    "History (Completed): {{history}}\n"
    "{{last_step}}Current Screen: {{screen}}\n";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

void maybe_read(const std::filesystem::path& p, std::string& into) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return;
  into.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
  return {std::string(kSystemPrompt), std::string(kThinkSuccess), std::string(kThinkNoChange),
          std::string(kUserTurn)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("prompt template directory not found: " + dir.string());
  PromptTemplates t = defaults();
  maybe_read(dir / "system_prompt.txt", t.system_prompt);
  maybe_read(dir / "think_success.txt", t.think_success);
  maybe_read(dir / "think_no_change.txt", t.think_no_change);
  maybe_read(dir / "user_turn.txt", t.user_turn);
  return t;
}

std::string format_completed_history(const std::vector<HistoryEntry>& history) {
  if (history.size() <= 1) return "(none)";
  std::string s;
  for (std::size_t i = 0; i + 1 < history.size(); ++i) {
    if (i) s += " | ";
    s += "Step " + std::to_string(i + 1) + ": " + describe(history[i].action);
  }
  return s;
}

std::optional<std::string> format_last_step(const std::vector<HistoryEntry>& history) {
  if (history.empty()) return std::nullopt;
  const HistoryEntry& last = history.back();
  return "Step " + std::to_string(history.size()) + ": Action " + action_to_tvae_json(last.action) +
         " | Expected: \"" + last.expected_effect + "\"";
}

std::string render_user_prompt(const PromptTemplates& templates, std::string_view instruction,
                               const std::vector<HistoryEntry>& history, std::string_view screen) {
  std::string s = templates.user_turn;
  const auto last = format_last_step(history);
  replace_all(s, "{{last_step}}", last ? "Last Step (Needs Verification): " + *last + "\n" : std::string());
  replace_all(s, "{{history}}", format_completed_history(history));
  replace_all(s, "{{screen}}", screen);
  replace_all(s, "{{instruction}}", instruction);
  return s;
}

}  // namespace tvae
