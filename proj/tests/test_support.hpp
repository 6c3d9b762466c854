#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sys/wait.h>
#include <unistd.h>
#include <string>
#include <vector>

#include "flywheel/driver.hpp"
#include "flywheel/encoder.hpp"
#include "flywheel/llm.hpp"
#include "flywheel/model.hpp"

namespace flywheel::testing {

inline std::string fixture(const std::string& rel) { return std::string(FLYWHEEL_FIXTURES) + "/" + rel; }

// Fresh empty directory under the system temp dir, private to this process
// so that parallel test runs do not collide.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("flywheel-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Gateway over a scripted mock that never sleeps.
struct MockGateway {
  std::shared_ptr<MockBackend> backend;
  std::unique_ptr<LlmGateway> gateway;

  explicit MockGateway(const nlohmann::json& script, int max_attempts = 3) {
    backend = std::make_shared<MockBackend>(script);
    GatewayConfig g;
    g.max_attempts = max_attempts;
    g.sleep = [](std::chrono::milliseconds) {};
    gateway = std::make_unique<LlmGateway>(backend, g);
  }
  LlmGateway& operator*() { return *gateway; }
};

// Response text holding one action block.
inline std::string action_response(const Action& a, const std::string& reasoning = "Next step.") {
  return reasoning + "\n\n```json\n" + nlohmann::json(a).dump(4) + "\n```";
}

inline SiteRecord site(const std::string& host, Safety safety = Safety::unknown) {
  SiteRecord s;
  s.host = host;
  s.safety = safety;
  if (safety == Safety::safe) s.seed_task = "Find the opening hours.";
  return s;
}

inline Observation observation(const std::string& url, const std::string& html) {
  return encode(DomSnapshot{url, html, {}, {}});
}

// Page with `links` links; ids 0..links-1.
inline std::string links_page(const std::string& title, int links) {
  std::string html = "<h1>" + title + "</h1>";
  for (int i = 0; i < links; ++i) html += "<a href=\"/l" + std::to_string(i) + "\">Link " + std::to_string(i) + "</a>";
  return html;
}

// Valid trajectory with n steps: clicks, then a stop when `stopped`.
inline Trajectory trajectory(const std::string& host, int n, bool stopped = true) {
  Trajectory t;
  t.site = site(host, Safety::safe);
  t.task = "Find the opening hours.";
  for (int i = 0; i < n; ++i) {
    Step s;
    s.index = i;
    s.observation = observation("https://" + host + "/page" + std::to_string(i), links_page("Page " + std::to_string(i), 2));
    const bool last = i == n - 1;
    s.action = last && stopped ? Action::stop("done") : Action::click(0);
    s.raw_response = action_response(*s.action);
    s.reasoning = "Next step.";
    t.steps.push_back(std::move(s));
  }
  t.termination = stopped ? Termination::stopped : Termination::action_cap;
  if (stopped) t.final_answer = "done";
  return t;
}

inline Trajectory scored(Trajectory t, double success) {
  t.judge = JudgeScores::from_raw(success, 0.5, 0.5, "ok");
  return t;
}

// Runs a shell command, capturing stdout. Returns the exit status.
inline int run_command(const std::string& cmd, std::string* out = nullptr) {
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return -1;
  std::array<char, 4096> buf{};
  std::string text;
  while (auto n = std::fread(buf.data(), 1, buf.size(), p)) text.append(buf.data(), n);
  const int status = ::pclose(p);
  if (out) *out = std::move(text);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace flywheel::testing
