#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "flywheel/encoder.hpp"
#include "flywheel/model.hpp"

namespace flywheel {

enum class ParseFailure { no_block, malformed_json, unknown_action_key, bad_kwargs, bad_target_id };

std::string_view to_string(ParseFailure f);

// Every variant is a retriable failure for the rollout engine.
class ActionParseError : public std::runtime_error {
 public:
  ActionParseError(ParseFailure kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ParseFailure kind() const { return kind_; }

 private:
  ParseFailure kind_;
};

// Contents between the first pair of ``` fence lines, with or without an info
// string such as `json`. Only the fence lines themselves are removed.
// Throws ActionParseError(no_block) when no complete pair exists.
std::string extract_first_fenced_block(std::string_view response);

// Response text with the first fenced block removed, trimmed.
std::string text_outside_first_block(std::string_view response);

// Decodes the first fenced block as strict JSON and validates it against the
// nine-action schema. "select" is accepted for select_option and
// a null target_element_id is the same as an absent one.
Action parse_action(std::string_view response);

// Action as a ```json fenced block, in the layout the prompts use.
std::string render_action(const Action& action);

// Markers delimiting the blocks of a rendered history.
inline constexpr std::string_view kWebpageHeader = "## Webpage (step ";
inline constexpr std::string_view kActionHeader = "## Action (step ";
// Stands in for the action of a step whose responses never parsed.
inline constexpr std::string_view kNoActionText = "(no valid action)";

std::string render_observation_block(std::int64_t step_index, const Observation& obs, const EncoderConfig& budget);

// Renders the final min(last_n, steps.size()) steps, each as its webpage
// Markdown followed by the action taken there.
std::string render_step_history(std::span<const Step> steps, std::size_t last_n, const EncoderConfig& budget = {});

// Number of webpage blocks in rendered prompt text.
std::size_t count_observation_blocks(std::string_view text);
// Number of ``` fenced blocks in text.
std::size_t count_fenced_blocks(std::string_view text);

// Cuts Markdown to the token budget by dropping whole trailing lines and
// appending the truncation marker. Identity when already within budget.
std::string truncate_markdown(std::string_view markdown, const EncoderConfig& config);

}  // namespace flywheel
