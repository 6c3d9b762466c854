#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "flywheel/driver.hpp"
#include "flywheel/util.hpp"
#include "test_support.hpp"

namespace flywheel {
namespace {

using nlohmann::json;

ReplayDriver::Snapshot snap(const std::string& url, int links) {
  ReplayDriver::Snapshot s;
  s.dom.url = url;
  s.dom.html = testing::links_page(url, links);
  for (int i = 0; i < links; ++i) s.elements.insert(i);
  return s;
}

TEST(Replay, AdvancesPerAction) {
  ReplayDriver d({snap("https://a.com/", 2), snap("https://a.com/2", 1)});
  const auto id = d.start_session("https://a.com/");
  EXPECT_EQ(d.observe(id).snapshot.url, "https://a.com/");
  EXPECT_EQ(d.observe(id).snapshot.url, "https://a.com/");  // observing does not advance
  d.apply(id, Action::click(1));
  EXPECT_EQ(d.observe(id).snapshot.url, "https://a.com/2");
  d.apply(id, Action::scroll(0, 100));
  EXPECT_THROW(d.observe(id), BrowserError);  // script exhausted
}

TEST(Replay, UnknownTargetFails) {
  ReplayDriver d({snap("https://a.com/", 2)}, true);
  const auto id = d.start_session("https://a.com/");
  EXPECT_THROW(d.apply(id, Action::click(2)), BrowserError);
  EXPECT_NO_THROW(d.apply(id, Action::go_back()));
  EXPECT_EQ(d.observe(id).snapshot.url, "https://a.com/");  // repeat_last
}

TEST(Replay, SessionsAreIndependentAndCounted) {
  ReplayDriver d({snap("https://a.com/", 1), snap("https://a.com/2", 1)});
  const auto s1 = d.start_session("u");
  const auto s2 = d.start_session("u");
  EXPECT_NE(s1, s2);
  d.apply(s1, Action::click(0));
  EXPECT_EQ(d.observe(s1).snapshot.url, "https://a.com/2");
  EXPECT_EQ(d.observe(s2).snapshot.url, "https://a.com/");
  d.close(s1);
  d.close(s1);
  EXPECT_THROW(d.observe(s1), BrowserError);
  EXPECT_THROW(d.observe("nope"), BrowserError);
  EXPECT_EQ(d.sessions_opened(), 2u);
  EXPECT_EQ(d.sessions_closed(), 1u);
}

TEST(Replay, LoadsScriptsAndDefaults) {
  const auto dir = testing::scratch_dir("replay");
  write_file((dir / "page.html").string(), "<a href=/x>X</a><button>B</button>");
  const json script{{"snapshots",
                     {{{"url", "https://a.com/"}, {"html_file", "page.html"}, {"screenshot_b64", "aGVsbG8="}},
                      {{"url", "https://a.com/2"}, {"html", "<p>done</p>"}, {"elements", {7}},
                       {"captured_at_ms", 5}}}}};
  write_file((dir / "a.com.json").string(), script.dump());
  write_file((dir / "default.json").string(),
             json{{"loop", true}, {"snapshots", {{{"url", "https://d.com/"}, {"html", "<p>d</p>"}}}}}.dump());

  auto factory = replay_directory_factory(dir.string());
  auto d = factory(testing::site("a.com"));
  const auto id = d->start_session("https://a.com/");
  const auto page = d->observe(id);
  EXPECT_EQ(page.screenshot_png, "hello");
  EXPECT_EQ(page.snapshot.captured_at.time_since_epoch().count(), 1704067200000);
  EXPECT_THROW(d->apply(id, Action::click(2)), BrowserError);  // encoder assigned ids 0 and 1
  d = factory(testing::site("a.com"));
  const auto id2 = d->start_session("https://a.com/");
  d->apply(id2, Action::click(1));
  EXPECT_EQ(d->observe(id2).snapshot.captured_at.time_since_epoch().count(), 5);
  EXPECT_NO_THROW(d->apply(id2, Action::click(7)));

  auto other = factory(testing::site("b.com"));
  const auto id3 = other->start_session("https://b.com/");
  EXPECT_EQ(other->observe(id3).snapshot.url, "https://d.com/");

  EXPECT_THROW(replay_directory_factory((dir / "missing").string()), std::invalid_argument);
  EXPECT_THROW(make_driver_factory("chrome:x"), std::invalid_argument);
}

// Minimal stand-in for the bridge service.
class FakeBridge : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      const auto body = json::parse(req.body);
      const auto id = "s" + std::to_string(++next_);
      sessions_[id] = {body.at("url").get<std::string>(), 0};
      res.set_content(json{{"session_id", id}}.dump(), "application/json");
    });
    server_.Get(R"(/session/([^/]+)/observe)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(req.matches[1]);
      if (it == sessions_.end()) {
        res.status = 404;
        return;
      }
      json reply{{"url", it->second.url},
                 {"html", "<p>step " + std::to_string(it->second.actions) + "</p><a href=/n>Next</a>"}};
      if (it->second.actions == 0) reply["screenshot_b64"] = base64_encode("PNGDATA");
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post(R"(/session/([^/]+)/action)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(req.matches[1]);
      if (it == sessions_.end()) {
        res.status = 404;
        return;
      }
      const auto action = json::parse(req.body).get<Action>();
      actions_.push_back(action);
      if (action.target_element_id && *action.target_element_id > 0) {
        res.status = 422;
        res.set_content(R"({"error":"no such element"})", "application/json");
        return;
      }
      ++it->second.actions;
      res.set_content(R"({"ok":true})", "application/json");
    });
    server_.Delete(R"(/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      if (!sessions_.erase(req.matches[1])) res.status = 404;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/"; }

  struct Session {
    std::string url;
    int actions;
  };
  std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::vector<Action> actions_;
  int next_ = 0;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(FakeBridge, SessionLifecycle) {
  HttpBridgeDriver d(base(), std::chrono::seconds(5));
  const auto id = d.start_session("https://a.com/");
  auto page = d.observe(id);
  EXPECT_EQ(page.snapshot.url, "https://a.com/");
  EXPECT_EQ(page.screenshot_png, "PNGDATA");
  EXPECT_EQ(encode(page.snapshot).elements.size(), 1u);
  d.apply(id, Action::click(0));
  page = d.observe(id);
  EXPECT_NE(page.snapshot.html.find("step 1"), std::string::npos);
  EXPECT_FALSE(page.screenshot_png);
  d.close(id);
  EXPECT_TRUE(sessions_.empty());
  EXPECT_NO_THROW(d.close(id));  // 404 on a reaped session is fine
  EXPECT_THROW(d.observe(id), BrowserError);
}

TEST_F(FakeBridge, SendsActionJson) {
  HttpBridgeDriver d(base(), std::chrono::seconds(5));
  const auto id = d.start_session("https://a.com/");
  const std::vector<Action> all{Action::click(0),        Action::hover(0),          Action::scroll(0, 300),
                                Action::fill(0, "text"), Action::select_option(0, "x"), Action::set_checked(0, true),
                                Action::go_back(),       Action::go_to("https://b.com/"), Action::stop("done")};
  for (const auto& a : all) d.apply(id, a);
  EXPECT_EQ(actions_, all);
}

TEST_F(FakeBridge, ErrorsBecomeBrowserErrors) {
  HttpBridgeDriver d(base(), std::chrono::seconds(5));
  const auto id = d.start_session("https://a.com/");
  EXPECT_THROW(d.apply(id, Action::click(3)), BrowserError);
  EXPECT_THROW(d.apply("missing", Action::go_back()), BrowserError);
}

TEST_F(FakeBridge, FactoryBuildsBridgeDrivers) {
  auto factory = make_driver_factory("bridge:" + base(), std::chrono::seconds(5));
  auto d = factory(testing::site("a.com"));
  const auto id = d->start_session("https://a.com/");
  EXPECT_EQ(d->observe(id).snapshot.url, "https://a.com/");
  d->close(id);
}

TEST(Bridge, UnreachableServer) {
  HttpBridgeDriver d("http://127.0.0.1:1", std::chrono::seconds(2));
  EXPECT_THROW(d.start_session("https://a.com/"), BrowserError);
}

}  // namespace
}  // namespace flywheel
