#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flywheel/encoder.hpp"
#include "flywheel/llm.hpp"
#include "flywheel/model.hpp"

namespace flywheel {

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JudgeConfig {
  std::size_t window = 5;
  std::int64_t max_new_tokens = 1024;
  double temperature = kDefaultTemperature;
  double top_p = kDefaultTopP;
  std::optional<std::int64_t> top_k;
  std::string model;
  int parse_retry_limit = 1;
  EncoderConfig encoder;
  // Attach the final step's screenshot when one was captured.
  bool images = false;
};

struct JudgeCounters {
  std::atomic<std::int64_t> clamped_scores{0};
  std::atomic<std::int64_t> parse_retries{0};
};

ChatRequest build_judge_request(const Trajectory& trajectory, const JudgeConfig& config);

// Scores from the first fenced block of a judge response. Values outside
// [0,1] are clamped and counted; extra keys are ignored. Throws JudgeError.
JudgeScores parse_judge_response(std::string_view response, JudgeCounters* counters = nullptr);

JudgeScores judge_trajectory(const Trajectory& trajectory, LlmGateway& gateway, const JudgeConfig& config = {},
                             JudgeCounters* counters = nullptr);

struct Stage3Summary {
  std::int64_t trajectories = 0;
  std::int64_t scored = 0;
  std::int64_t unscorable = 0;
  std::int64_t clamped_scores = 0;
  double success_rate = 0.0;  // fraction with success_binary among scored
  double mean_efficiency = 0.0;
  double mean_self_correction = 0.0;
};

struct JudgedItem {
  Trajectory trajectory;  // judge set when scored
  std::optional<std::string> error;
};

struct Stage3Result {
  std::vector<JudgedItem> items;  // input order
  Stage3Summary summary;
};

Stage3Result run_stage3(const std::vector<Trajectory>& trajectories, LlmGateway& gateway, const JudgeConfig& config,
                        std::size_t workers);

Stage3Summary summarize_scores(const std::vector<Trajectory>& trajectories);

}  // namespace flywheel
