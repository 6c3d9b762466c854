#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace flywheel {

enum class ChatRole { user, assistant };

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;
  std::optional<std::string> image_ref;  // path to an image file
};

inline constexpr double kDefaultTemperature = 0.5;
inline constexpr double kDefaultTopP = 1.0;
inline constexpr std::int64_t kDefaultMaxNewTokens = 1024;

struct ChatRequest {
  std::string system;
  std::vector<ChatMessage> messages;
  double temperature = kDefaultTemperature;
  double top_p = kDefaultTopP;
  std::int64_t max_new_tokens = kDefaultMaxNewTokens;
  std::string model;
  std::optional<std::int64_t> top_k;  // only sent when configured
};

// Throws std::invalid_argument on out-of-range sampling parameters.
void validate(const ChatRequest& request);

// OpenAI-compatible request body. Images are inlined as data URLs when
// include_images is set, otherwise omitted.
nlohmann::json to_wire(const ChatRequest& request, bool include_images);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  Usage usage;
};

class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Connection-level failure; retried by the gateway.
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};

// Non-2xx reply from the endpoint.
class EndpointError : public LlmError {
 public:
  EndpointError(int status, const std::string& message)
      : LlmError("HTTP " + std::to_string(status) + ": " + message), status_(status) {}
  int status() const { return status_; }
  bool retriable() const { return status_ == 429 || status_ >= 500; }

 private:
  int status_;
};

class BudgetExceeded : public LlmError {
 public:
  using LlmError::LlmError;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
  virtual bool supports_images() const { return false; }
};

// Scripted backend for tests and offline runs.
//
// Script JSON is either a bare array of responses, consumed in order by every
// request, or an object
//
//   {"rules": [{"when_all": ["substr", ...], "responses": [...], "after": "repeat_last"}],
//    "images": false}
//
// A request is matched against the first rule whose substrings all occur in
// the system prompt or message text. Each rule hands out its responses in
// order; once exhausted it repeats the last one ("repeat_last"), starts over
// ("cycle") or fails ("error"). A response entry is a string, or an object
// {"error": "transport"} / {"status": 500} to script a failure. Usage is the
// default token count of the prompt and completion text.
class MockBackend final : public ChatBackend {
 public:
  explicit MockBackend(const nlohmann::json& script);
  static std::shared_ptr<MockBackend> from_file(const std::string& path);
  static std::shared_ptr<MockBackend> scripted(std::vector<std::string> responses);

  ChatResponse send(const ChatRequest& request) override;
  bool supports_images() const override { return images_; }

  std::vector<ChatRequest> requests() const;
  std::size_t request_count() const;

 private:
  enum class Exhausted { repeat_last, cycle, error };
  struct Rule {
    std::vector<std::string> when_all;
    std::vector<nlohmann::json> responses;
    Exhausted after = Exhausted::repeat_last;
    std::size_t next = 0;
  };

  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::vector<ChatRequest> log_;
  bool images_ = false;
};

// OpenAI-compatible chat completions over HTTP(S).
class HttpBackend final : public ChatBackend {
 public:
  struct Options {
    std::string base_url;  // e.g. http://localhost:8000 or https://host/v1
    std::string api_key;
    std::chrono::seconds timeout{120};
    bool images = false;
  };

  explicit HttpBackend(Options options);
  ChatResponse send(const ChatRequest& request) override;
  bool supports_images() const override { return options_.images; }

  // Path the request is posted to, derived from base_url.
  const std::string& endpoint_path() const { return path_; }

 private:
  Options options_;
  std::string origin_;
  std::string path_;
};

struct UsageSnapshot {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t requests = 0;
  std::int64_t failures = 0;
  std::int64_t retries = 0;
  std::int64_t images_dropped = 0;

  std::int64_t total_tokens() const { return prompt_tokens + completion_tokens; }
};

void to_json(nlohmann::json& j, const UsageSnapshot& u);

class UsageLedger {
 public:
  void record(const Usage& u) {
    prompt_tokens_ += u.prompt_tokens;
    completion_tokens_ += u.completion_tokens;
  }
  void add_request() { ++requests_; }
  void add_failure() { ++failures_; }
  void add_retry() { ++retries_; }
  void add_image_dropped() { ++images_dropped_; }

  UsageSnapshot snapshot() const {
    return {prompt_tokens_.load(), completion_tokens_.load(), requests_.load(),
            failures_.load(),      retries_.load(),           images_dropped_.load()};
  }

 private:
  std::atomic<std::int64_t> prompt_tokens_{0};
  std::atomic<std::int64_t> completion_tokens_{0};
  std::atomic<std::int64_t> requests_{0};
  std::atomic<std::int64_t> failures_{0};
  std::atomic<std::int64_t> retries_{0};
  std::atomic<std::int64_t> images_dropped_{0};
};

struct GatewayConfig {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 4.0;
  double jitter = 0.25;  // +/- fraction applied to each delay
  std::size_t max_in_flight = 32;
  std::int64_t token_cap = 0;  // 0 = unlimited
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// Share-safe client: caps in-flight requests, retries transient failures
// with jittered exponential backoff and keeps usage totals.
class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config = {});

  ChatResponse complete(ChatRequest request);

  UsageSnapshot usage() const { return ledger_.snapshot(); }
  ChatBackend& backend() { return *backend_; }

  // Delay before attempt `attempt` (1-based retry count), without jitter.
  std::chrono::milliseconds nominal_backoff(int attempt) const;

 private:
  std::shared_ptr<ChatBackend> backend_;
  GatewayConfig config_;
  UsageLedger ledger_;
  std::counting_semaphore<> in_flight_;
  std::mutex rng_mu_;
  std::uint64_t rng_state_ = 0x853c49e6748fea9bULL;
};

// Back-of-envelope token totals for a full run.
struct RunShape {
  double tasks = 0;
  double avg_observation_tokens = 0;
  double window = 0;
  double avg_response_tokens = 0;
  double system_tokens = 0;
  double avg_steps = 0;
};

struct TokenEstimate {
  double agent = 0;
  double judge = 0;
  double total = 0;
};

// agent = tasks * steps * (system + window * observation + response)
// judge = tasks * (system + window * observation + window * response + response)
TokenEstimate estimate_run_tokens(const RunShape& shape);

}  // namespace flywheel
