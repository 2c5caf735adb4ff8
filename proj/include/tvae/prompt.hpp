#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tvae/codec.hpp"

namespace tvae {

/// Prompt text sent to remote model servers. The defaults mirror the
/// template files shipped under templates/.
struct PromptTemplates {
  std::string system_prompt;
  std::string think_success;
  std::string think_no_change;
  /// Placeholders: {{instruction}} {{history}} {{last_step}} {{screen}}
  std::string user_turn;

  static PromptTemplates defaults();
  /// Reads system_prompt.txt, think_success.txt, think_no_change.txt and
  /// user_turn.txt from dir; missing files keep their default.
  static PromptTemplates load(const std::filesystem::path& dir);
};

/// `Step 1: click [318, 194] | Step 2: navigate_back | ...` over all but the
/// last history entry; "(none)" when there are none.
std::string format_completed_history(const std::vector<HistoryEntry>& history);

/// `Step N: Action {...} | Expected: "..."` for the last entry, or nothing.
std::optional<std::string> format_last_step(const std::vector<HistoryEntry>& history);

std::string render_user_prompt(const PromptTemplates& templates, std::string_view instruction,
                               const std::vector<HistoryEntry>& history, std::string_view screen);

}  // namespace tvae
