#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flywheel/driver.hpp"
#include "flywheel/encoder.hpp"
#include "flywheel/llm.hpp"
#include "flywheel/model.hpp"

namespace flywheel {

struct EpisodeConfig {
  std::int64_t max_actions = kDefaultActionCap;
  std::size_t agent_window = 5;
  std::int64_t response_token_budget = 1024;
  int parse_retry_limit = 1;  // 0 or 1
  double temperature = kDefaultTemperature;
  double top_p = kDefaultTopP;
  std::optional<std::int64_t> top_k;
  std::string model;
  EncoderConfig encoder;
  // A driver call slower than this ends the episode with browser_error.
  std::chrono::milliseconds browser_timeout{30000};
  // Screenshots are written here when set and the driver provides them.
  std::optional<std::string> screenshot_dir;
  // Attach the current screenshot to the agent prompt.
  bool agent_images = false;
};

// Throws std::invalid_argument for out-of-range settings.
void validate(const EpisodeConfig& config);

// URL an episode starts from.
std::string start_url(const SiteRecord& site);

// Runs one agent episode. Never throws for runtime failures: they end the
// episode with parse_error or browser_error and set Trajectory::error. The
// browser session is always closed.
Trajectory run_episode(const SiteRecord& site, const std::string& task, BrowserDriver& driver, LlmGateway& gateway,
                       const EpisodeConfig& config = {});

struct EpisodeInput {
  SiteRecord site;
  std::string task;
};

struct Stage2Summary {
  std::int64_t episodes = 0;
  std::int64_t failed = 0;  // could not start (e.g. no driver for the site)
  std::int64_t total_steps = 0;
  double mean_steps = 0.0;
  std::int64_t off_site_steps = 0;
  std::map<std::int64_t, std::int64_t> step_histogram;  // steps -> episodes
  std::map<std::string, std::int64_t> terminations;
};

struct EpisodeOutcome {
  std::optional<Trajectory> trajectory;
  std::optional<std::string> error;
};

struct Stage2Result {
  std::vector<EpisodeOutcome> outcomes;  // input order
  Stage2Summary summary;
};

Stage2Result run_stage2(const std::vector<EpisodeInput>& inputs, const DriverFactory& factory, LlmGateway& gateway,
                        const EpisodeConfig& config, std::size_t workers);

Stage2Summary summarize_episodes(const std::vector<Trajectory>& trajectories);

}  // namespace flywheel
