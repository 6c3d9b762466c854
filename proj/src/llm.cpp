#include "flywheel/llm.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>

#include "flywheel/tokenizer.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;

void validate(const ChatRequest& request) {
  if (!(request.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(request.top_p > 0.0 && request.top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (request.max_new_tokens <= 0) throw std::invalid_argument("max_new_tokens must be positive");
  if (request.top_k && *request.top_k <= 0) throw std::invalid_argument("top_k must be positive");
}

namespace {

std::string image_mime(const std::string& path) {
  const auto dot = path.rfind('.');
  const auto ext = dot == std::string::npos ? std::string{} : to_lower(path.substr(dot + 1));
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "webp") return "image/webp";
  return "image/png";
}

std::string request_text(const ChatRequest& r) {
  std::string text = r.system;
  for (const auto& m : r.messages) {
    text += '\n';
    text += m.content;
  }
  return text;
}

}  // namespace

json to_wire(const ChatRequest& request, bool include_images) {
  json messages = json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  for (const auto& m : request.messages) {
    const char* role = m.role == ChatRole::user ? "user" : "assistant";
    if (m.image_ref && include_images) {
      const auto bytes = read_file(*m.image_ref);
      json parts = json::array();
      parts.push_back({{"type", "text"}, {"text", m.content}});
      parts.push_back(
          {{"type", "image_url"},
           {"image_url", {{"url", "data:" + image_mime(*m.image_ref) + ";base64," + base64_encode(bytes)}}}});
      messages.push_back({{"role", role}, {"content", std::move(parts)}});
    } else {
      messages.push_back({{"role", role}, {"content", m.content}});
    }
  }
  json body{{"model", request.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"top_p", request.top_p},
            {"max_tokens", request.max_new_tokens}};
  if (request.top_k) body["top_k"] = *request.top_k;
  return body;
}

// --- MockBackend ----------------------------------------------------------

MockBackend::MockBackend(const json& script) {
  auto add_rule = [&](const json& r) {
    Rule rule;
    if (r.contains("when_all")) rule.when_all = r.at("when_all").get<std::vector<std::string>>();
    for (const auto& resp : r.at("responses")) rule.responses.push_back(resp);
    const auto after = r.value("after", std::string("repeat_last"));
    if (after == "cycle") rule.after = Exhausted::cycle;
    else if (after == "error") rule.after = Exhausted::error;
    else if (after == "repeat_last") rule.after = Exhausted::repeat_last;
    else throw std::invalid_argument("unknown mock 'after' policy: " + after);
    if (rule.responses.empty()) throw std::invalid_argument("mock rule without responses");
    rules_.push_back(std::move(rule));
  };
  if (script.is_array()) {
    add_rule(json{{"responses", script}});
  } else if (script.is_object()) {
    for (const auto& r : script.at("rules")) add_rule(r);
    images_ = script.value("images", false);
  } else {
    throw std::invalid_argument("mock script must be an array or an object");
  }
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::string& path) {
  return std::make_shared<MockBackend>(json::parse(read_file(path)));
}

std::shared_ptr<MockBackend> MockBackend::scripted(std::vector<std::string> responses) {
  return std::make_shared<MockBackend>(json(std::move(responses)));
}

ChatResponse MockBackend::send(const ChatRequest& request) {
  const auto text = request_text(request);
  json entry;
  {
    std::lock_guard lock(mu_);
    log_.push_back(request);
    Rule* match = nullptr;
    for (auto& rule : rules_) {
      bool all = true;
      for (const auto& needle : rule.when_all) {
        if (text.find(needle) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (all) {
        match = &rule;
        break;
      }
    }
    if (!match) throw EndpointError(404, "no mock rule matches the request");
    auto index = match->next++;
    if (index >= match->responses.size()) {
      switch (match->after) {
        case Exhausted::repeat_last: index = match->responses.size() - 1; break;
        case Exhausted::cycle: index %= match->responses.size(); break;
        case Exhausted::error: throw EndpointError(410, "mock script exhausted");
      }
    }
    entry = match->responses[index];
  }
  if (entry.is_object()) {
    if (entry.contains("status")) throw EndpointError(entry["status"].get<int>(), "scripted failure");
    throw TransportError("scripted transport failure");
  }
  ChatResponse response;
  response.text = entry.get<std::string>();
  response.usage.prompt_tokens = count_tokens(text);
  response.usage.completion_tokens = count_tokens(response.text);
  return response;
}

std::vector<ChatRequest> MockBackend::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t MockBackend::request_count() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

// --- HttpBackend ----------------------------------------------------------

HttpBackend::HttpBackend(Options options) : options_(std::move(options)) {
  const auto scheme_end = options_.base_url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + options_.base_url);
  const auto path_begin = options_.base_url.find('/', scheme_end + 3);
  origin_ = options_.base_url.substr(0, path_begin);
  std::string prefix = path_begin == std::string::npos ? std::string{} : options_.base_url.substr(path_begin);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  const bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
  path_ = prefix + (has_v1 ? "/chat/completions" : "/v1/chat/completions");
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  const auto body = to_wire(request, options_.images).dump();
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw EndpointError(res->status, res->body.substr(0, 512));

  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw EndpointError(res->status, std::string("unparseable body: ") + e.what());
  }
  ChatResponse out;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const json::exception& e) {
    throw EndpointError(res->status, std::string("unexpected body: ") + e.what());
  }
  if (reply.contains("usage") && reply["usage"].is_object()) {
    out.usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
    out.usage.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
  } else {
    out.usage.prompt_tokens = count_tokens(request_text(request));
    out.usage.completion_tokens = count_tokens(out.text);
  }
  return out;
}

// --- Gateway ----------------------------------------------------------------

void to_json(json& j, const UsageSnapshot& u) {
  j = json{{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens},
           {"requests", u.requests},           {"failures", u.failures},
           {"retries", u.retries},             {"images_dropped", u.images_dropped}};
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(config_.max_in_flight, 1))) {
  if (!backend_) throw std::invalid_argument("gateway needs a backend");
  if (config_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (!config_.sleep) config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::chrono::milliseconds LlmGateway::nominal_backoff(int attempt) const {
  const double ms = static_cast<double>(config_.backoff_base.count()) * std::pow(config_.backoff_factor, attempt - 1);
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

ChatResponse LlmGateway::complete(ChatRequest request) {
  validate(request);
  ledger_.add_request();
  if (config_.token_cap > 0 && ledger_.snapshot().total_tokens() >= config_.token_cap) {
    ledger_.add_failure();
    throw BudgetExceeded("token cap of " + std::to_string(config_.token_cap) + " reached");
  }
  if (!backend_->supports_images()) {
    for (auto& m : request.messages) {
      if (m.image_ref) {
        m.image_ref.reset();
        ledger_.add_image_dropped();
      }
    }
  }

  for (int attempt = 1;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      auto response = backend_->send(request);
      ledger_.record(response.usage);
      return response;
    } catch (const TransportError&) {
      if (attempt >= config_.max_attempts) {
        ledger_.add_failure();
        throw;
      }
    } catch (const EndpointError& e) {
      if (!e.retriable() || attempt >= config_.max_attempts) {
        ledger_.add_failure();
        throw;
      }
    }
    ledger_.add_retry();
    double factor = 1.0;
    {
      std::lock_guard lock(rng_mu_);
      rng_state_ ^= rng_state_ << 13;
      rng_state_ ^= rng_state_ >> 7;
      rng_state_ ^= rng_state_ << 17;
      const double unit = static_cast<double>(rng_state_ >> 11) / static_cast<double>(1ULL << 53);
      factor = 1.0 + config_.jitter * (2.0 * unit - 1.0);
    }
    const auto nominal = nominal_backoff(attempt);
    config_.sleep(std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(nominal.count()) * factor)));
  }
}

TokenEstimate estimate_run_tokens(const RunShape& s) {
  for (double v : {s.tasks, s.avg_observation_tokens, s.window, s.avg_response_tokens, s.system_tokens, s.avg_steps})
    if (!(v > 0)) throw std::invalid_argument("estimate_run_tokens inputs must be positive");
  const double context = s.system_tokens + s.window * s.avg_observation_tokens;
  TokenEstimate e;
  e.agent = s.tasks * s.avg_steps * (context + s.avg_response_tokens);
  e.judge = s.tasks * (context + s.window * s.avg_response_tokens + s.avg_response_tokens);
  e.total = e.agent + e.judge;
  return e;
}

}  // namespace flywheel
