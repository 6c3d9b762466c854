#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "flywheel/encoder.hpp"
#include "flywheel/model.hpp"

namespace flywheel {

class BrowserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using SessionId = std::string;

struct PageState {
  DomSnapshot snapshot;
  std::optional<std::string> screenshot_png;  // raw bytes
};

// One browser per session. apply on a closed or unknown session throws
// BrowserError; observe after apply reflects the action.
class BrowserDriver {
 public:
  virtual ~BrowserDriver() = default;
  virtual SessionId start_session(const std::string& url) = 0;
  virtual PageState observe(const SessionId& session) = 0;
  virtual void apply(const SessionId& session, const Action& action) = 0;
  virtual void close(const SessionId& session) = 0;
};

using DriverFactory = std::function<std::unique_ptr<BrowserDriver>(const SiteRecord&)>;

// Serves a scripted sequence of page snapshots. Every applied action moves to
// the next snapshot; actions targeting an id that is not in the current
// snapshot's element registry fail with BrowserError, as does observing past
// the end of the script (unless repeat_last is set).
//
// Script file:
//   {"repeat_last": false,
//    "snapshots": [{"url": "...", "html": "..." | "html_file": "page.html",
//                   "elements": [0, 1, 2], "captured_at_ms": 0, "screenshot_b64": "..."}]}
// "elements" defaults to the ids the encoder assigns to the html;
// "captured_at_ms" defaults to a fixed base plus one second per snapshot.
class ReplayDriver final : public BrowserDriver {
 public:
  struct Snapshot {
    DomSnapshot dom;
    std::set<std::int64_t> elements;
    std::optional<std::string> screenshot_png;
  };

  explicit ReplayDriver(std::vector<Snapshot> snapshots, bool repeat_last = false);
  static std::unique_ptr<ReplayDriver> load(const std::string& script_path);

  SessionId start_session(const std::string& url) override;
  PageState observe(const SessionId& session) override;
  void apply(const SessionId& session, const Action& action) override;
  void close(const SessionId& session) override;

  std::size_t sessions_opened() const;
  std::size_t sessions_closed() const;

 private:
  struct Session {
    std::size_t position = 0;
    bool closed = false;
  };
  Session& find(const SessionId& id);
  const Snapshot& current(const Session& s) const;

  std::vector<Snapshot> snapshots_;
  bool repeat_last_;
  mutable std::mutex mu_;
  std::map<SessionId, Session> sessions_;
  std::size_t opened_ = 0;
  std::size_t closed_ = 0;
};

// Factory for "replay:<dir>": <dir>/<host>.json when present, otherwise
// <dir>/default.json.
DriverFactory replay_directory_factory(const std::string& directory);

// Client for the browser bridge service:
//   POST   /session               {"url"}        -> {"session_id"}
//   GET    /session/{id}/observe                -> {"url", "html", "screenshot_b64"?}
//   POST   /session/{id}/action   Action JSON   -> {"ok": true} | error status
//   DELETE /session/{id}
class HttpBridgeDriver final : public BrowserDriver {
 public:
  HttpBridgeDriver(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(30));

  SessionId start_session(const std::string& url) override;
  PageState observe(const SessionId& session) override;
  void apply(const SessionId& session, const Action& action) override;
  void close(const SessionId& session) override;

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
};

// Builds a factory from a driver spec: "replay:<dir>" or "bridge:<url>".
DriverFactory make_driver_factory(const std::string& spec, std::chrono::seconds timeout = std::chrono::seconds(30));

}  // namespace flywheel
