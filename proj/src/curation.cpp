#include "flywheel/curation.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "flywheel/context.hpp"
#include "flywheel/prompts.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;

// --- filtering ---------------------------------------------------------------

Partition partition_success(const std::vector<Trajectory>& scored) {
  Partition p;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& t = scored[i];
    if (!t.judge) throw std::invalid_argument("trajectory " + std::to_string(i) + " (" + t.site.host + ") is unscored");
    (t.judge->success == 1.0 ? p.kept : p.rejected).push_back(t);
  }
  return p;
}

std::vector<Trajectory> filter_success(const std::vector<Trajectory>& scored) {
  return partition_success(scored).kept;
}

// --- SFT records -------------------------------------------------------------

std::int64_t token_estimate(const SftRecord& r, const EncoderConfig& tokens) {
  const auto& c = tokens.counter();
  return c.count(r.system) + c.count(r.context) + c.count(r.target);
}

void validate(const SftRecord& r) {
  if (r.system.empty()) throw ValidationError("system", "empty");
  if (r.context.empty()) throw ValidationError("context", "empty");
  if (r.target.empty()) throw ValidationError("target", "empty");
  if (r.meta.host.empty()) throw ValidationError("meta.host", "empty");
  if (r.meta.step_index < 0) throw ValidationError("meta.step_index", "must be nonnegative");
  if (r.meta.judge) validate(*r.meta.judge);
}

void to_json(json& j, const SftRecord& r) {
  json meta{{"host", r.meta.host}, {"task", r.meta.task}, {"step_index", r.meta.step_index}};
  if (r.meta.judge) meta["judge"] = *r.meta.judge;
  if (!r.meta.split.empty()) meta["split"] = r.meta.split;
  j = json{{"system", r.system}, {"context", r.context}, {"target", r.target}, {"meta", std::move(meta)}};
}

void from_json(const json& j, SftRecord& r) {
  try {
    r.system = j.at("system").get<std::string>();
    r.context = j.at("context").get<std::string>();
    r.target = j.at("target").get<std::string>();
    const auto& m = j.at("meta");
    r.meta.host = m.at("host").get<std::string>();
    r.meta.task = m.at("task").get<std::string>();
    r.meta.step_index = m.at("step_index").get<std::int64_t>();
    r.meta.judge = m.contains("judge") ? std::optional(m["judge"].get<JudgeScores>()) : std::nullopt;
    r.meta.split = m.value("split", std::string{});
  } catch (const json::exception& e) {
    throw ValidationError("<sft>", e.what());
  }
}

SftBuildResult build_sft_dataset(const std::vector<Trajectory>& kept, std::size_t window, std::int64_t seq_budget,
                                 const EncoderConfig& encoder) {
  if (window == 0) throw std::invalid_argument("window must be >= 1");
  SftBuildResult out;
  const std::string system(prompts::agent_system());
  for (const auto& t : kept) {
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const auto& step = t.steps[i];
      if (!step.action) {
        ++out.skipped_without_action;
        continue;
      }
      SftRecord r;
      r.system = system;
      r.context = build_agent_prompt(t.task, std::span<const Step>(t.steps.data(), i), step.index, step.observation,
                                     window, encoder);
      r.target = step.raw_response;
      r.meta = SftMeta{t.site.host, t.task, step.index, t.judge, {}};
      if (token_estimate(r, encoder) > seq_budget) {
        ++out.dropped_over_budget;
        continue;
      }
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

// --- split -------------------------------------------------------------------

std::string split_for_host(std::string_view host, int test_percent) {
  if (test_percent < 0 || test_percent > 100) throw std::invalid_argument("test_percent must be in [0,100]");
  return fnv1a64(host) % 100 < static_cast<std::uint64_t>(test_percent) ? "test" : "train";
}

SplitManifest assign_splits(std::vector<SftRecord>& records, int test_percent) {
  SplitManifest m;
  std::map<std::string, std::set<std::string>> hosts;
  m.records["train"] = 0;
  m.records["test"] = 0;
  for (auto& r : records) {
    r.meta.split = split_for_host(r.meta.host, test_percent);
    ++m.records[r.meta.split];
    hosts[r.meta.split].insert(r.meta.host);
  }
  for (const char* s : {"train", "test"}) m.hosts[s] = {hosts[s].begin(), hosts[s].end()};
  return m;
}

json to_json(const SplitManifest& m) {
  json j = json::object();
  for (const auto& [split, n] : m.records) j[split] = {{"records", n}, {"hosts", m.hosts.at(split)}};
  return j;
}

// --- interleaving --------------------------------------------------------------

InterleaveResult interleave(std::size_t n_human, std::size_t n_synthetic, const InterleaveOptions& o) {
  if (!(o.p_real >= 0.0 && o.p_real <= 1.0)) throw std::invalid_argument("p_real must be in [0,1]");
  if (o.with_replacement && !o.max_draws) throw std::invalid_argument("sampling with replacement needs max_draws");

  std::mt19937_64 rng(o.seed);
  std::bernoulli_distribution coin(o.p_real);
  InterleaveResult r;
  std::size_t next_human = 0, next_synth = 0;
  bool warned_human = false, warned_synth = false;

  auto available = [&](DataSource s) {
    const auto n = s == DataSource::human ? n_human : n_synthetic;
    if (o.with_replacement) return n > 0;
    return (s == DataSource::human ? next_human : next_synth) < n;
  };

  while (!o.max_draws || r.draws.size() < *o.max_draws) {
    if (!available(DataSource::human) && !available(DataSource::synthetic)) break;
    auto source = coin(rng) ? DataSource::human : DataSource::synthetic;
    if (!available(source)) {
      bool& warned = source == DataSource::human ? warned_human : warned_synth;
      if (!warned) {
        warned = true;
        ++r.exhaustion_warnings;
      }
      ++r.redirected_draws;
      source = source == DataSource::human ? DataSource::synthetic : DataSource::human;
    }
    std::size_t index;
    if (o.with_replacement) {
      const auto n = source == DataSource::human ? n_human : n_synthetic;
      index = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    } else {
      index = source == DataSource::human ? next_human++ : next_synth++;
    }
    r.draws.push_back({source, index});
  }
  return r;
}

// --- statistics ----------------------------------------------------------------

std::size_t histogram_bin(double value) {
  const auto b = static_cast<std::int64_t>(std::floor(value * static_cast<double>(kHistogramBins)));
  return static_cast<std::size_t>(std::clamp<std::int64_t>(b, 0, kHistogramBins - 1));
}

DatasetStats dataset_stats(const std::vector<Trajectory>& trajectories) {
  DatasetStats s;
  s.trajectories = static_cast<std::int64_t>(trajectories.size());
  for (const auto& t : trajectories) {
    ++s.terminations[std::string(to_string(t.termination))];
    for (const auto& step : t.steps) {
      ++s.action_traces;
      if (step.action) ++s.parsed_actions;
      if (step.observation.screenshot_ref) ++s.screenshots;
    }
    if (t.judge) {
      ++s.judge_traces;
      if (t.judge->success_binary) ++s.successes;
      ++s.efficiency[histogram_bin(t.judge->efficiency)];
      ++s.self_correction[histogram_bin(t.judge->self_correction)];
    }
  }
  if (s.judge_traces) s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.judge_traces);
  if (s.trajectories) s.mean_steps = static_cast<double>(s.action_traces) / static_cast<double>(s.trajectories);
  return s;
}

json to_json(const DatasetStats& s) {
  return json{{"trajectories", s.trajectories},
              {"action_traces", s.action_traces},
              {"parsed_actions", s.parsed_actions},
              {"screenshots", s.screenshots},
              {"judge_traces", s.judge_traces},
              {"successes", s.successes},
              {"success_rate", s.success_rate},
              {"mean_steps", s.mean_steps},
              {"efficiency_histogram", s.efficiency},
              {"self_correction_histogram", s.self_correction},
              {"terminations", s.terminations}};
}

std::string to_text(const DatasetStats& s) {
  char buf[128];
  std::string out;
  auto line = [&](const char* label, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-22s %s\n", label, value.c_str());
    out += buf;
  };
  line("trajectories", std::to_string(s.trajectories));
  line("action traces", std::to_string(s.action_traces));
  line("parsed actions", std::to_string(s.parsed_actions));
  line("screenshots", std::to_string(s.screenshots));
  line("judge traces", std::to_string(s.judge_traces));
  std::snprintf(buf, sizeof buf, "%.4f", s.success_rate);
  line("success rate", buf);
  std::snprintf(buf, sizeof buf, "%.2f", s.mean_steps);
  line("mean steps", buf);
  auto hist = [&](const char* label, const Histogram& h) {
    std::string v;
    for (std::size_t i = 0; i < h.size(); ++i) v += (i ? " " : "") + std::to_string(h[i]);
    line(label, v);
  };
  hist("efficiency hist", s.efficiency);
  hist("self-correction hist", s.self_correction);
  for (const auto& [k, n] : s.terminations) line(("end: " + k).c_str(), std::to_string(n));
  return out;
}

// --- task categories -----------------------------------------------------------

std::pair<std::string, bool> normalize_category(std::string_view response, std::size_t max_words) {
  auto text = trim(response);
  text = text.substr(0, text.find('\n'));
  constexpr std::string_view kStrip = "`'\"*.,;:!?";
  while (!text.empty() && kStrip.find(text.front()) != std::string_view::npos) text = trim(text.substr(1));
  while (!text.empty() && kStrip.find(text.back()) != std::string_view::npos)
    text = trim(text.substr(0, text.size() - 1));
  auto words = split_whitespace(to_lower(text));
  const bool truncated = words.size() > max_words;
  if (truncated) words.resize(max_words);
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return {out, truncated};
}

CategorizeResult categorize_tasks(const std::vector<CategorizeInput>& tasks, LlmGateway& gateway,
                                  const CategorizeConfig& config, std::size_t workers) {
  struct One {
    std::optional<std::string> category;
    bool truncated = false;
  };
  const auto results = parallel_map(tasks, workers, [&](const CategorizeInput& in) {
    ChatRequest r;
    r.system = std::string(prompts::categorizer_system());
    r.temperature = config.temperature;
    r.top_p = config.top_p;
    r.max_new_tokens = config.max_new_tokens;
    r.model = config.model;
    r.messages.push_back({ChatRole::user, in.domain + ": " + in.task, std::nullopt});
    One one;
    try {
      auto [category, truncated] = normalize_category(gateway.complete(r).text, config.max_words);
      if (!category.empty()) one.category = std::move(category);
      one.truncated = truncated;
    } catch (const LlmError&) {
    }
    return one;
  });

  CategorizeResult out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!results[i].category) {
      ++out.failed;
      continue;
    }
    if (results[i].truncated) ++out.truncated;
    out.category_by_task[tasks[i].task] = *results[i].category;
    ++out.histogram[*results[i].category];
  }
  if (!out.histogram.empty())
    out.mean_tasks_per_category =
        static_cast<double>(tasks.size() - out.failed) / static_cast<double>(out.histogram.size());
  return out;
}

}  // namespace flywheel
