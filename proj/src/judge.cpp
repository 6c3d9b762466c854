#include "flywheel/judge.hpp"

#include <algorithm>
#include <cmath>

#include "flywheel/action_codec.hpp"
#include "flywheel/context.hpp"
#include "flywheel/prompts.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;

ChatRequest build_judge_request(const Trajectory& t, const JudgeConfig& c) {
  ChatRequest r;
  r.system = std::string(prompts::judge_system());
  r.temperature = c.temperature;
  r.top_p = c.top_p;
  r.top_k = c.top_k;
  r.max_new_tokens = c.max_new_tokens;
  r.model = c.model;
  std::optional<std::string> image;
  if (c.images && !t.steps.empty()) image = t.steps.back().observation.screenshot_ref;
  r.messages.push_back({ChatRole::user, build_review_prompt(t, c.window, c.encoder), image});
  return r;
}

JudgeScores parse_judge_response(std::string_view response, JudgeCounters* counters) {
  std::string block;
  try {
    block = extract_first_fenced_block(response);
  } catch (const ActionParseError& e) {
    throw JudgeError(e.what());
  }
  json j;
  try {
    j = json::parse(block, nullptr, true, false);
  } catch (const json::parse_error& e) {
    throw JudgeError(std::string("malformed score JSON: ") + e.what());
  }
  if (!j.is_object()) throw JudgeError("score block must be a JSON object");

  auto score = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) throw JudgeError(std::string("score block needs numeric ") + key);
    const double v = j[key].get<double>();
    if (!std::isfinite(v)) throw JudgeError(std::string(key) + " is not finite");
    const double clamped = std::clamp(v, 0.0, 1.0);
    if (clamped != v && counters) ++counters->clamped_scores;
    return clamped;
  };
  const double success = score("success");
  const double efficiency = score("efficiency");
  const double self_correction = score("self_correction");
  return JudgeScores::from_raw(success, efficiency, self_correction, text_outside_first_block(response));
}

JudgeScores judge_trajectory(const Trajectory& t, LlmGateway& gateway, const JudgeConfig& config,
                             JudgeCounters* counters) {
  if (t.steps.empty()) throw JudgeError("trajectory has no steps");
  const auto request = build_judge_request(t, config);
  for (int attempt = 0;; ++attempt) {
    std::string text;
    try {
      text = gateway.complete(request).text;
    } catch (const LlmError& e) {
      throw JudgeError(std::string("llm: ") + e.what());
    }
    try {
      return parse_judge_response(text, counters);
    } catch (const JudgeError&) {
      if (attempt >= config.parse_retry_limit) throw;
      if (counters) ++counters->parse_retries;
    }
  }
}

Stage3Summary summarize_scores(const std::vector<Trajectory>& trajectories) {
  Stage3Summary s;
  s.trajectories = static_cast<std::int64_t>(trajectories.size());
  double successes = 0, eff = 0, self = 0;
  for (const auto& t : trajectories) {
    if (!t.judge) {
      ++s.unscorable;
      continue;
    }
    ++s.scored;
    successes += t.judge->success_binary ? 1 : 0;
    eff += t.judge->efficiency;
    self += t.judge->self_correction;
  }
  if (s.scored) {
    const auto n = static_cast<double>(s.scored);
    s.success_rate = successes / n;
    s.mean_efficiency = eff / n;
    s.mean_self_correction = self / n;
  }
  return s;
}

Stage3Result run_stage3(const std::vector<Trajectory>& trajectories, LlmGateway& gateway, const JudgeConfig& config,
                        std::size_t workers) {
  JudgeCounters counters;
  Stage3Result result;
  result.items = parallel_map(trajectories, workers, [&](const Trajectory& t) {
    JudgedItem item{t, std::nullopt};
    item.trajectory.judge.reset();
    try {
      item.trajectory.judge = judge_trajectory(t, gateway, config, &counters);
    } catch (const JudgeError& e) {
      item.error = t.site.host + ": " + e.what();
    }
    return item;
  });
  std::vector<Trajectory> all;
  all.reserve(result.items.size());
  for (const auto& i : result.items) all.push_back(i.trajectory);
  result.summary = summarize_scores(all);
  result.summary.clamped_scores = counters.clamped_scores;
  return result;
}

}  // namespace flywheel
