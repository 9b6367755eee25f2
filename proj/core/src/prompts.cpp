#include "xpolicy/prompts.hpp"

#include <algorithm>
#include <sstream>

namespace xpolicy {

const std::vector<Task>& all_tasks() {
    static const std::vector<Task> t = {Task::Reach, Task::Hold, Task::BiReach};
    return t;
}

std::string task_name(Task t) {
    switch (t) {
        case Task::Reach: return "reach";
        case Task::Hold: return "hold";
        case Task::BiReach: return "bireach";
    }
    throw io_error("unhandled task");
}

Task task_from_name(const std::string& name) {
    for (Task t : all_tasks())
        if (task_name(t) == name) return t;
    throw io_error("unknown task '" + name + "' (expected reach|hold|bireach)");
}

const std::vector<std::string>& task_prompts(Task t) {
    static const std::vector<std::string> reach = {
        "move left gripper to the red target",   "reach the red target with the left arm",
        "go to the red dot",                     "bring the left gripper onto the red target",
        "move to the red target",                "put the left gripper on the red dot",
        "left arm to the red target",            "touch the red target",
        "guide the left arm to the red dot",     "reach toward the red target",
    };
    static const std::vector<std::string> hold = {
        "hold left gripper on the red target",   "stay on the red target",
        "keep the left gripper at the red dot",  "hold position at the red target",
        "remain on the red dot",                 "keep holding the red target",
        "park the left gripper on the red target", "hold at the red dot",
        "stay at the red target with left arm",  "hold the left arm on the red dot",
    };
    static const std::vector<std::string> bireach = {
        "touch red and yellow targets with both grippers", "reach both the red and yellow targets",
        "both arms to their targets",            "left to red and right to yellow",
        "move both grippers to the two targets", "touch the red and the yellow dots",
        "reach red with left and yellow with right", "bring both arms onto both targets",
        "two arms two targets go",               "touch both targets at the same time",
    };
    switch (t) {
        case Task::Reach: return reach;
        case Task::Hold: return hold;
        case Task::BiReach: return bireach;
    }
    throw io_error("unhandled task");
}

const std::string& task_prompt(Task t) { return task_prompts(t)[0]; }

const std::vector<std::string>& prompt_vocabulary() {
    static const std::vector<std::string> vocab = [] {
        std::vector<std::string> v;
        for (Task t : all_tasks())
            for (const std::string& prompt : task_prompts(t)) {
                std::istringstream in(prompt);
                std::string w;
                while (in >> w)
                    if (std::find(v.begin(), v.end(), w) == v.end()) v.push_back(w);
            }
        return v;
    }();
    return vocab;
}

std::vector<long> tokenize_prompt(const std::string& prompt) {
    const auto& vocab = prompt_vocabulary();
    std::vector<long> ids;
    std::istringstream in(prompt);
    std::string w;
    while (in >> w) {
        auto it = std::find(vocab.begin(), vocab.end(), w);
        if (it == vocab.end()) throw io_error("prompt word '" + w + "' not in vocabulary");
        ids.push_back(static_cast<long>(it - vocab.begin()));
    }
    if (ids.empty()) throw io_error("empty prompt");
    if (static_cast<long>(ids.size()) > kPromptMaxTokens)
        throw io_error("prompt longer than " + std::to_string(kPromptMaxTokens) + " tokens");
    return ids;
}

}  // namespace xpolicy
