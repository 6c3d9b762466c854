#pragma once

#include <span>
#include <string>

#include "flywheel/encoder.hpp"
#include "flywheel/model.hpp"

namespace flywheel {

inline constexpr std::size_t kDefaultWindow = 5;

// User message for the agent at a step: the task, the previous (window - 1)
// steps with their actions, then the current page. The prompt therefore holds
// min(window, history.size() + 1) webpage blocks.
std::string build_agent_prompt(std::string_view task, std::span<const Step> history, std::int64_t current_index,
                               const Observation& current, std::size_t window = kDefaultWindow,
                               const EncoderConfig& budget = {});

// User message describing a finished episode for review by the judge or the
// task proposer. It holds the last `window` steps followed by how the episode
// ended. Judge scores are included when present and include_scores is set.
std::string build_review_prompt(const Trajectory& trajectory, std::size_t window = kDefaultWindow,
                                const EncoderConfig& budget = {}, bool include_scores = false);

}  // namespace flywheel
