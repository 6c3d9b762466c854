#include "flywheel/context.hpp"

#include <cstdio>

#include "flywheel/action_codec.hpp"

namespace flywheel {

namespace {

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string build_agent_prompt(std::string_view task, std::span<const Step> history, std::int64_t current_index,
                               const Observation& current, std::size_t window, const EncoderConfig& budget) {
  if (window == 0) throw std::invalid_argument("window must be >= 1");
  std::string out = "## Task\n\n";
  out += task;
  out += "\n\n";
  if (window > 1 && !history.empty()) {
    out += render_step_history(history, window - 1, budget);
    out += '\n';
  }
  out += render_observation_block(current_index, current, budget);
  return out;
}

std::string build_review_prompt(const Trajectory& t, std::size_t window, const EncoderConfig& budget,
                                bool include_scores) {
  std::string out = "## Website\n\n" + t.site.host + "\n\n## Task\n\n" + t.task + "\n\n";
  if (!t.steps.empty()) {
    out += render_step_history(t.steps, window, budget);
    out += '\n';
  }
  out += "## Outcome\n\n";
  out += "Steps taken: " + std::to_string(t.steps.size()) + "\n";
  out += "Termination: " + std::string(to_string(t.termination)) + "\n";
  out += "Final answer: " + (t.final_answer ? *t.final_answer : std::string("(none)")) + "\n";
  if (include_scores && t.judge) {
    out += "\n## Performance Review\n\n";
    out += "success: " + format_score(t.judge->success) + ", efficiency: " + format_score(t.judge->efficiency) +
           ", self_correction: " + format_score(t.judge->self_correction) + "\n";
  }
  return out;
}

}  // namespace flywheel
