#pragma once

#include <string>
#include <vector>

#include "xpolicy/error.hpp"

namespace xpolicy {

/// Desk-scale task set. Reach: left gripper to the red target. Hold: reach it
/// and stay there. BiReach: left to red, right to yellow, simultaneously.
enum class Task { Reach, Hold, BiReach };

inline constexpr int kTaskCount = 3;
inline constexpr long kPromptMaxTokens = 8;

inline constexpr long kPromptVariants = 10;

const std::vector<Task>& all_tasks();
std::string task_name(Task t);
Task task_from_name(const std::string& name);  // throws io_error

/// Ten paraphrases per task; lengths differ on purpose so no padding path
/// can hide. Variant 0 is the canonical phrasing.
const std::vector<std::string>& task_prompts(Task t);

/// The canonical phrasing, task_prompts(t)[0].
const std::string& task_prompt(Task t);

/// Whitespace-token vocabulary covering every task prompt.
const std::vector<std::string>& prompt_vocabulary();

/// Prompt -> token ids. Unknown words or over-long prompts throw.
std::vector<long> tokenize_prompt(const std::string& prompt);

}  // namespace xpolicy
