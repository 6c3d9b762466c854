#include "flywheel/rollout.hpp"

#include <filesystem>

#include "flywheel/action_codec.hpp"
#include "flywheel/context.hpp"
#include "flywheel/prompts.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

namespace fs = std::filesystem;

void validate(const EpisodeConfig& c) {
  if (c.max_actions < 1) throw std::invalid_argument("max_actions must be >= 1");
  if (c.agent_window < 1) throw std::invalid_argument("agent_window must be >= 1");
  if (c.response_token_budget < 1) throw std::invalid_argument("response_token_budget must be >= 1");
  if (c.parse_retry_limit < 0 || c.parse_retry_limit > 1) throw std::invalid_argument("parse_retry_limit must be 0 or 1");
  if (c.encoder.observation_token_budget < kMinObservationBudget)
    throw std::invalid_argument("observation budget below minimum");
}

std::string start_url(const SiteRecord& site) { return "https://" + site.host + "/"; }

namespace {

using Clock = std::chrono::steady_clock;

std::string url_host(std::string_view url) {
  const auto scheme = url.find("://");
  if (scheme == std::string_view::npos) return {};
  auto rest = url.substr(scheme + 3);
  rest = rest.substr(0, rest.find_first_of("/?#"));
  if (const auto at = rest.rfind('@'); at != std::string_view::npos) rest.remove_prefix(at + 1);
  rest = rest.substr(0, rest.find(':'));
  auto host = to_lower(rest);
  if (host.starts_with("www.")) host.erase(0, 4);
  return host;
}

bool leaves_site(const Action& action, const SiteRecord& site) {
  if (action.key != ActionKey::go_to) return false;
  const auto host = url_host(std::get<std::string>(action.kwargs.at("url")));
  if (host.empty()) return false;  // relative
  auto home = site.host;
  if (home.starts_with("www.")) home.erase(0, 4);
  return host != home;
}

// Times a driver call against the configured limit.
template <typename Fn>
auto timed(const EpisodeConfig& c, const char* what, Fn&& fn) {
  const auto begin = Clock::now();
  auto check = [&] {
    if (Clock::now() - begin > c.browser_timeout)
      throw BrowserError(std::string(what) + " exceeded the " + std::to_string(c.browser_timeout.count()) +
                         " ms step timeout");
  };
  if constexpr (std::is_void_v<decltype(fn())>) {
    fn();
    check();
  } else {
    auto r = fn();
    check();
    return r;
  }
}

ChatRequest agent_request(const EpisodeConfig& c) {
  ChatRequest r;
  r.system = std::string(prompts::agent_system());
  r.temperature = c.temperature;
  r.top_p = c.top_p;
  r.top_k = c.top_k;
  r.max_new_tokens = c.response_token_budget;
  r.model = c.model;
  return r;
}

}  // namespace

Trajectory run_episode(const SiteRecord& site, const std::string& task, BrowserDriver& driver, LlmGateway& gateway,
                       const EpisodeConfig& config) {
  validate(config);
  if (task.empty()) throw std::invalid_argument("task must be nonempty");

  Trajectory traj;
  traj.site = site;
  traj.task = task;
  traj.termination = Termination::action_cap;

  SessionId session;
  try {
    session = timed(config, "start_session", [&] { return driver.start_session(start_url(site)); });
  } catch (const std::exception& e) {
    traj.termination = Termination::browser_error;
    traj.error = e.what();
    return traj;
  }

  const auto episode_key = hex64(fnv1a64(site.host + "\n" + task));
  auto finish = [&](Termination t, std::string error) {
    traj.termination = t;
    traj.error = std::move(error);
  };

  try {
    for (std::int64_t t = 0; t < config.max_actions; ++t) {
      Step step;
      step.index = t;
      try {
        const auto page = timed(config, "observe", [&] { return driver.observe(session); });
        step.observation = encode(page.snapshot, config.encoder);
        if (config.screenshot_dir && page.screenshot_png) {
          fs::create_directories(*config.screenshot_dir);
          const auto path = (fs::path(*config.screenshot_dir) / (episode_key + "-" + std::to_string(t) + ".png")).string();
          write_file(path, *page.screenshot_png);
          step.observation.screenshot_ref = path;
        }
      } catch (const std::exception& e) {
        finish(Termination::browser_error, e.what());
        break;
      }

      auto request = agent_request(config);
      request.messages.push_back({ChatRole::user,
                                  build_agent_prompt(task, traj.steps, t, step.observation, config.agent_window,
                                                     config.encoder),
                                  config.agent_images ? step.observation.screenshot_ref : std::nullopt});

      std::optional<std::string> parse_failure;
      for (int attempt = 0; attempt <= config.parse_retry_limit; ++attempt) {
        step.parse_retries = attempt;
        try {
          step.raw_response = gateway.complete(request).text;
        } catch (const LlmError& e) {
          // No response means no action; this ends the episode like a parse failure.
          step.raw_response.clear();
          parse_failure = std::string("llm: ") + e.what();
          break;
        }
        try {
          step.action = parse_action(step.raw_response);
          parse_failure.reset();
          break;
        } catch (const ActionParseError& e) {
          parse_failure = e.what();
        }
      }
      step.reasoning = text_outside_first_block(step.raw_response);

      if (parse_failure) {
        step.action.reset();
        traj.steps.push_back(std::move(step));
        finish(Termination::parse_error, *parse_failure);
        break;
      }

      const auto action = *step.action;
      if (action.key == ActionKey::stop) {
        if (auto it = action.kwargs.find("answer"); it != action.kwargs.end())
          traj.final_answer = std::get<std::string>(it->second);
        traj.steps.push_back(std::move(step));
        traj.termination = Termination::stopped;
        break;
      }
      step.off_site = leaves_site(action, site);
      traj.steps.push_back(std::move(step));
      try {
        timed(config, "apply", [&] { driver.apply(session, action); });
      } catch (const std::exception& e) {
        finish(Termination::browser_error, e.what());
        break;
      }
    }
  } catch (const std::exception& e) {
    // Anything unexpected still yields a trajectory.
    finish(Termination::browser_error, std::string("internal: ") + e.what());
  }

  try {
    driver.close(session);
  } catch (const std::exception& e) {
    if (!traj.error) traj.error = std::string("close: ") + e.what();
  }
  return traj;
}

Stage2Summary summarize_episodes(const std::vector<Trajectory>& trajectories) {
  Stage2Summary s;
  s.episodes = static_cast<std::int64_t>(trajectories.size());
  for (const auto& t : trajectories) {
    const auto n = static_cast<std::int64_t>(t.steps.size());
    s.total_steps += n;
    ++s.step_histogram[n];
    ++s.terminations[std::string(to_string(t.termination))];
    for (const auto& step : t.steps) s.off_site_steps += step.off_site ? 1 : 0;
  }
  s.mean_steps = s.episodes ? static_cast<double>(s.total_steps) / static_cast<double>(s.episodes) : 0.0;
  return s;
}

Stage2Result run_stage2(const std::vector<EpisodeInput>& inputs, const DriverFactory& factory, LlmGateway& gateway,
                        const EpisodeConfig& config, std::size_t workers) {
  validate(config);
  Stage2Result result;
  result.outcomes = parallel_map(inputs, workers, [&](const EpisodeInput& in) {
    EpisodeOutcome o;
    try {
      auto driver = factory(in.site);
      o.trajectory = run_episode(in.site, in.task, *driver, gateway, config);
    } catch (const std::exception& e) {
      o.error = in.site.host + ": " + e.what();
    }
    return o;
  });
  std::vector<Trajectory> done;
  for (const auto& o : result.outcomes)
    if (o.trajectory) done.push_back(*o.trajectory);
  result.summary = summarize_episodes(done);
  result.summary.failed = static_cast<std::int64_t>(inputs.size() - done.size());
  return result;
}

}  // namespace flywheel
