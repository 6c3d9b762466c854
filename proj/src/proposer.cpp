#include "flywheel/proposer.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "flywheel/action_codec.hpp"
#include "flywheel/context.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;

bool is_skip_response(std::string_view response) {
  constexpr std::string_view kWrappers = "`'\"";
  auto s = trim(response);
  auto unwrap = [&] {
    while (!s.empty() && kWrappers.find(s.front()) != std::string_view::npos) s = trim(s.substr(1));
    while (!s.empty() && kWrappers.find(s.back()) != std::string_view::npos) s = trim(s.substr(0, s.size() - 1));
  };
  unwrap();
  if (!s.empty() && s.back() == '.') s.remove_suffix(1);
  unwrap();
  return to_lower(s) == "n/a";
}

std::vector<prompts::ExampleTask> sample_examples(const std::vector<prompts::ExampleTask>& pool, std::size_t k,
                                                  std::uint64_t seed) {
  if (pool.size() < k)
    throw std::invalid_argument("example pool has " + std::to_string(pool.size()) + " entries, need " +
                                std::to_string(k));
  std::mt19937_64 rng(seed);
  std::vector<prompts::ExampleTask> out;
  out.reserve(k);
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), k, rng);
  return out;
}

namespace {

ChatRequest base_request(const ProposerConfig& c) {
  ChatRequest r;
  r.temperature = c.temperature;
  r.top_p = c.top_p;
  r.top_k = c.top_k;
  r.max_new_tokens = c.max_new_tokens;
  r.model = c.model;
  return r;
}

}  // namespace

ChatRequest build_seed_request(const SiteRecord& site, const std::vector<prompts::ExampleTask>& examples,
                               const ProposerConfig& config) {
  auto r = base_request(config);
  r.system = std::string(prompts::proposer_seed_system());
  for (const auto& ex : examples) {
    r.messages.push_back({ChatRole::user, ex.domain, std::nullopt});
    r.messages.push_back({ChatRole::assistant, ex.task, std::nullopt});
  }
  r.messages.push_back({ChatRole::user, site.host, std::nullopt});
  return r;
}

SiteRecord propose_seed(const SiteRecord& site, const std::vector<prompts::ExampleTask>& pool, std::uint64_t seed,
                        LlmGateway& gateway, const ProposerConfig& config, ProposerWarnings* warnings) {
  if (site.safety != Safety::unknown) throw ProposalError(site.host + ": safety already decided");
  const auto examples = sample_examples(pool, config.in_context_examples, seed);
  const auto response = gateway.complete(build_seed_request(site, examples, config));
  const auto text = trim(response.text);
  if (text.empty()) throw ProposalError(site.host + ": empty proposer response");

  SiteRecord out = site;
  if (is_skip_response(text)) {
    out.safety = Safety::unsafe;
    return out;
  }
  out.safety = Safety::safe;
  out.seed_task = std::string(text);
  if (warnings && split_whitespace(text).size() > config.max_seed_words) ++warnings->long_seed_tasks;
  return out;
}

ChatRequest build_refine_request(const Trajectory& trajectory, const ProposerConfig& config) {
  auto r = base_request(config);
  r.system = std::string(prompts::proposer_refine_system());
  r.messages.push_back({ChatRole::user, build_review_prompt(trajectory, config.window, config.encoder, true),
                        std::nullopt});
  return r;
}

RefinedTask parse_refined_task(std::string_view response) {
  std::string block;
  try {
    block = extract_first_fenced_block(response);
  } catch (const ActionParseError& e) {
    throw ProposalError(e.what());
  }
  json j;
  try {
    j = json::parse(block, nullptr, true, false);
  } catch (const json::parse_error& e) {
    throw ProposalError(std::string("malformed task JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProposalError("task block must be a JSON object");
  RefinedTask t;
  try {
    t.proposed_task = j.at("proposed_task").get<std::string>();
    t.steps = j.at("steps").get<std::vector<std::string>>();
    t.criteria = j.at("criteria").get<std::string>();
  } catch (const json::exception& e) {
    throw ProposalError(std::string("task block: ") + e.what());
  }
  try {
    validate(t);
  } catch (const ValidationError& e) {
    throw ProposalError(std::string("task block: ") + e.what());
  }
  return t;
}

RefinedTask propose_refined(const SiteRecord& site, const Trajectory& trajectory, LlmGateway& gateway,
                            const ProposerConfig& config, ProposerWarnings* warnings) {
  if (site.safety != Safety::safe || !site.seed_task) throw ProposalError(site.host + ": not a safe seeded site");
  if (site.refined_task) throw ProposalError(site.host + ": already refined");
  if (trajectory.task != *site.seed_task) throw ProposalError(site.host + ": trajectory did not run the seed task");
  const auto request = build_refine_request(trajectory, config);
  for (int attempt = 0;; ++attempt) {
    const auto response = gateway.complete(request);
    try {
      return parse_refined_task(response.text);
    } catch (const ProposalError&) {
      if (attempt >= config.parse_retry_limit) throw;
      if (warnings) ++warnings->refine_parse_retries;
    }
  }
}

Stage1Result run_stage1(const std::vector<SiteRecord>& sites, const std::vector<prompts::ExampleTask>& pool,
                        std::uint64_t root_seed, LlmGateway& gateway, const ProposerConfig& config,
                        std::size_t workers) {
  std::set<std::string> hosts;
  for (const auto& s : sites)
    if (!hosts.insert(s.host).second) throw std::invalid_argument("duplicate host " + s.host);

  ProposerWarnings warnings;
  Stage1Result result;
  result.outcomes = parallel_map(sites, workers, [&](const SiteRecord& site) {
    SiteOutcome o{site, std::nullopt};
    try {
      o.site = propose_seed(site, pool, derive_seed(root_seed, site.host), gateway, config, &warnings);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  });

  auto& s = result.summary;
  s.sites = static_cast<std::int64_t>(sites.size());
  for (const auto& o : result.outcomes) {
    if (o.error) ++s.errors;
    else if (o.site.safety == Safety::safe) ++s.safe;
    else ++s.unsafe;
  }
  s.long_seed_tasks = warnings.long_seed_tasks;
  s.safe_fraction = s.safe + s.unsafe > 0 ? static_cast<double>(s.safe) / static_cast<double>(s.safe + s.unsafe) : 0.0;
  return result;
}

}  // namespace flywheel
