#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace flywheel {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pipeline hyperparameters. [limits] holds the run-shaping values with their
// published defaults; the other sections are operational.
struct PipelineConfig {
  std::uint64_t seed = 0;

  struct Limits {
    std::int64_t observation_token_budget = 2048;
    std::int64_t agent_trace_tokens = 1024;
    std::int64_t judge_trace_tokens = 1024;
    std::int64_t proposer_trace_tokens = 1024;
    std::int64_t agent_window = 5;
    std::int64_t judge_window = 5;
    std::int64_t proposer_window = 5;
    std::int64_t feedback_loops = 1;
    double temperature = 0.5;
    double top_p = 1.0;
    std::optional<std::int64_t> top_k;  // "default": not sent
    double p_real = 0.8;
    std::int64_t max_actions = 30;
    std::int64_t in_context_examples = 16;
    std::int64_t max_sequence_tokens = 16384;
    std::int64_t parse_retry_limit = 1;
  } limits;

  struct Llm {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key;  // from INSTA_LLM_API_KEY
    std::string model = "default";
    std::int64_t timeout_s = 120;
    std::int64_t max_attempts = 3;
    std::int64_t backoff_base_ms = 1000;
    double backoff_factor = 4.0;
    std::int64_t max_in_flight = 32;
    std::int64_t token_cap = 0;
    bool images = false;
  } llm;

  struct Workers {
    std::int64_t llm = 32;
    std::int64_t browser = 8;
  } workers;

  struct Browser {
    std::string bridge_url = "http://localhost:7777";
    std::int64_t timeout_s = 30;
    bool screenshots = false;
    std::string screenshot_dir = "screenshots";
  } browser;

  struct Ingest {
    std::int64_t top_k = 1000000;
    std::int64_t position_column = 2;
    std::int64_t value_column = 3;
    std::int64_t host_column = 4;
    bool check_header = true;
  } ingest;

  struct Export {
    std::int64_t test_percent = 10;
    bool scrub_pii = false;
  } export_;

  struct Evals {
    std::int64_t min_category_n = 100;
  } evals;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Process environment.
std::optional<std::string> process_env(const std::string& name);

// Defaults, then the TOML document, then INSTA_<SECTION>_<KEY> variables
// (INSTA_SEED for the top-level seed). INSTA_LLM_API_KEY, INSTA_LLM_BASE_URL
// and INSTA_BRIDGE_URL are also honored. Unknown keys and type mismatches are
// errors.
PipelineConfig parse_config(std::string_view toml_text, const EnvLookup& env = process_env);
PipelineConfig load_config(const std::optional<std::string>& path, const EnvLookup& env = process_env);

void validate(const PipelineConfig& c);

// Every setting except secrets, as JSON.
nlohmann::json to_json(const PipelineConfig& c);
// fnv1a64 over the canonical JSON dump.
std::uint64_t config_hash(const PipelineConfig& c);

}  // namespace flywheel
