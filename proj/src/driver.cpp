#include "flywheel/driver.hpp"

#include <filesystem>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// 2024-01-01T00:00:00Z; replay snapshots without a timestamp count up from here.
constexpr std::int64_t kReplayEpochMs = 1704067200000;

}  // namespace

// --- ReplayDriver -----------------------------------------------------------

ReplayDriver::ReplayDriver(std::vector<Snapshot> snapshots, bool repeat_last)
    : snapshots_(std::move(snapshots)), repeat_last_(repeat_last) {
  if (snapshots_.empty()) throw std::invalid_argument("replay script has no snapshots");
}

std::unique_ptr<ReplayDriver> ReplayDriver::load(const std::string& script_path) {
  json script;
  try {
    script = json::parse(read_file(script_path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(script_path + ": " + e.what());
  }
  const auto base = fs::path(script_path).parent_path();
  std::vector<Snapshot> snapshots;
  std::int64_t i = 0;
  for (const auto& s : script.at("snapshots")) {
    Snapshot snap;
    snap.dom.url = s.at("url").get<std::string>();
    if (s.contains("html_file")) snap.dom.html = read_file((base / s["html_file"].get<std::string>()).string());
    else snap.dom.html = s.at("html").get<std::string>();
    const auto ms = s.value("captured_at_ms", kReplayEpochMs + 1000 * i);
    snap.dom.captured_at = Timestamp(std::chrono::milliseconds(ms));
    if (s.contains("elements")) {
      for (const auto& id : s["elements"]) snap.elements.insert(id.get<std::int64_t>());
    } else {
      for (const auto& [id, _] : encode(snap.dom).elements) snap.elements.insert(id);
    }
    if (s.contains("screenshot_b64")) {
      auto png = base64_decode(s["screenshot_b64"].get<std::string>());
      if (!png) throw std::runtime_error(script_path + ": bad screenshot_b64 in snapshot " + std::to_string(i));
      snap.screenshot_png = std::move(*png);
    }
    snapshots.push_back(std::move(snap));
    ++i;
  }
  const bool repeat = script.value("repeat_last", false) || script.value("loop", false);
  return std::make_unique<ReplayDriver>(std::move(snapshots), repeat);
}

ReplayDriver::Session& ReplayDriver::find(const SessionId& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw BrowserError("unknown session " + id);
  if (it->second.closed) throw BrowserError("session " + id + " is closed");
  return it->second;
}

const ReplayDriver::Snapshot& ReplayDriver::current(const Session& s) const {
  if (s.position < snapshots_.size()) return snapshots_[s.position];
  if (repeat_last_) return snapshots_.back();
  throw BrowserError("replay script exhausted after " + std::to_string(snapshots_.size()) + " snapshots");
}

SessionId ReplayDriver::start_session(const std::string&) {
  std::lock_guard lock(mu_);
  const auto id = "replay-" + std::to_string(opened_++);
  sessions_.emplace(id, Session{});
  return id;
}

PageState ReplayDriver::observe(const SessionId& session) {
  std::lock_guard lock(mu_);
  const auto& snap = current(find(session));
  return PageState{snap.dom, snap.screenshot_png};
}

void ReplayDriver::apply(const SessionId& session, const Action& action) {
  std::lock_guard lock(mu_);
  auto& s = find(session);
  const auto& snap = current(s);
  if (action.target_element_id && !snap.elements.contains(*action.target_element_id))
    throw BrowserError("no element with id " + std::to_string(*action.target_element_id) + " on " + snap.dom.url);
  ++s.position;
}

void ReplayDriver::close(const SessionId& session) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session);
  if (it == sessions_.end() || it->second.closed) return;
  it->second.closed = true;
  ++closed_;
}

std::size_t ReplayDriver::sessions_opened() const {
  std::lock_guard lock(mu_);
  return opened_;
}

std::size_t ReplayDriver::sessions_closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

DriverFactory replay_directory_factory(const std::string& directory) {
  if (!fs::is_directory(directory)) throw std::invalid_argument("replay directory not found: " + directory);
  return [directory](const SiteRecord& site) -> std::unique_ptr<BrowserDriver> {
    auto path = fs::path(directory) / (site.host + ".json");
    if (!fs::exists(path)) path = fs::path(directory) / "default.json";
    if (!fs::exists(path)) throw BrowserError("no replay script for " + site.host);
    return ReplayDriver::load(path.string());
  };
}

// --- HttpBridgeDriver -------------------------------------------------------

namespace {

httplib::Client bridge_client(const std::string& base_url, std::chrono::seconds timeout) {
  httplib::Client c(base_url);
  c.set_connection_timeout(timeout);
  c.set_read_timeout(timeout);
  c.set_write_timeout(timeout);
  return c;
}

json expect_json(const httplib::Result& res, const std::string& what) {
  if (!res) throw BrowserError(what + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw BrowserError(what + ": HTTP " + std::to_string(res->status) + " " + res->body.substr(0, 256));
  if (res->body.empty()) return json::object();
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw BrowserError(what + ": bad JSON reply: " + e.what());
  }
}

}  // namespace

HttpBridgeDriver::HttpBridgeDriver(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

SessionId HttpBridgeDriver::start_session(const std::string& url) {
  auto c = bridge_client(base_url_, timeout_);
  const auto reply = expect_json(c.Post("/session", json{{"url", url}}.dump(), "application/json"), "start session");
  if (!reply.contains("session_id")) throw BrowserError("start session: reply lacks session_id");
  const auto& id = reply["session_id"];
  return id.is_string() ? id.get<std::string>() : id.dump();
}

PageState HttpBridgeDriver::observe(const SessionId& session) {
  auto c = bridge_client(base_url_, timeout_);
  const auto reply = expect_json(c.Get("/session/" + session + "/observe"), "observe");
  PageState page;
  try {
    page.snapshot.url = reply.at("url").get<std::string>();
    page.snapshot.html = reply.at("html").get<std::string>();
  } catch (const json::exception& e) {
    throw BrowserError(std::string("observe: ") + e.what());
  }
  page.snapshot.captured_at = std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  if (reply.contains("screenshot_b64") && reply["screenshot_b64"].is_string()) {
    page.screenshot_png = base64_decode(reply["screenshot_b64"].get<std::string>());
    if (!page.screenshot_png) throw BrowserError("observe: bad screenshot_b64");
  }
  return page;
}

void HttpBridgeDriver::apply(const SessionId& session, const Action& action) {
  auto c = bridge_client(base_url_, timeout_);
  const auto reply =
      expect_json(c.Post("/session/" + session + "/action", json(action).dump(), "application/json"), "action");
  if (reply.contains("error")) throw BrowserError("action: " + reply["error"].dump());
  if (reply.contains("ok") && reply["ok"] == false) throw BrowserError("action rejected by bridge");
}

void HttpBridgeDriver::close(const SessionId& session) {
  auto c = bridge_client(base_url_, timeout_);
  auto res = c.Delete("/session/" + session);
  // 404/409 mean the bridge already reaped the session.
  if (res && (res->status == 404 || res->status == 409)) return;
  expect_json(res, "close session");
}

DriverFactory make_driver_factory(const std::string& spec, std::chrono::seconds timeout) {
  if (spec.starts_with("replay:")) return replay_directory_factory(spec.substr(7));
  if (spec.starts_with("bridge:")) {
    auto url = spec.substr(7);
    return [url, timeout](const SiteRecord&) { return std::make_unique<HttpBridgeDriver>(url, timeout); };
  }
  throw std::invalid_argument("driver spec must be replay:<dir> or bridge:<url>, got '" + spec + "'");
}

}  // namespace flywheel
