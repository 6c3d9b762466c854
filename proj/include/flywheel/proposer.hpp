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
#include "flywheel/prompts.hpp"

namespace flywheel {

class ProposalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProposerConfig {
  std::size_t in_context_examples = 16;
  std::size_t window = 5;
  std::int64_t max_new_tokens = 1024;
  double temperature = kDefaultTemperature;
  double top_p = kDefaultTopP;
  std::optional<std::int64_t> top_k;
  std::string model;
  int parse_retry_limit = 1;
  std::size_t max_seed_words = 20;  // longer seed tasks are kept with a warning
  EncoderConfig encoder;
};

struct ProposerWarnings {
  std::atomic<std::int64_t> long_seed_tasks{0};
  std::atomic<std::int64_t> refine_parse_retries{0};
};

// True when a phase-1 response declines the site: "N/A" after stripping
// whitespace and quote characters plus one trailing period, compared
// case-insensitively.
bool is_skip_response(std::string_view response);

// Seeded, order-stable choice of k distinct pool entries.
std::vector<prompts::ExampleTask> sample_examples(const std::vector<prompts::ExampleTask>& pool, std::size_t k,
                                                  std::uint64_t seed);

ChatRequest build_seed_request(const SiteRecord& site, const std::vector<prompts::ExampleTask>& examples,
                               const ProposerConfig& config);

SiteRecord propose_seed(const SiteRecord& site, const std::vector<prompts::ExampleTask>& pool, std::uint64_t seed,
                        LlmGateway& gateway, const ProposerConfig& config = {}, ProposerWarnings* warnings = nullptr);

ChatRequest build_refine_request(const Trajectory& trajectory, const ProposerConfig& config);

// Decodes the first fenced block of a phase-2 response. Throws ProposalError.
RefinedTask parse_refined_task(std::string_view response);

RefinedTask propose_refined(const SiteRecord& site, const Trajectory& trajectory, LlmGateway& gateway,
                            const ProposerConfig& config = {}, ProposerWarnings* warnings = nullptr);

struct SiteOutcome {
  SiteRecord site;
  std::optional<std::string> error;
};

struct Stage1Summary {
  std::int64_t sites = 0;
  std::int64_t safe = 0;
  std::int64_t unsafe = 0;
  std::int64_t errors = 0;
  std::int64_t long_seed_tasks = 0;
  double safe_fraction = 0.0;  // safe / (safe + unsafe)
};

struct Stage1Result {
  std::vector<SiteOutcome> outcomes;  // input order
  Stage1Summary summary;
};

// Runs propose_seed over sites with bounded parallelism. Per-site seeds come
// from derive_seed(root_seed, host). Hosts must be unique.
Stage1Result run_stage1(const std::vector<SiteRecord>& sites, const std::vector<prompts::ExampleTask>& pool,
                        std::uint64_t root_seed, LlmGateway& gateway, const ProposerConfig& config,
                        std::size_t workers);

}  // namespace flywheel
