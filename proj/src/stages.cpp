#include "flywheel/stages.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "flywheel/curation.hpp"
#include "flywheel/evals.hpp"
#include "flywheel/ingest.hpp"
#include "flywheel/jsonl.hpp"
#include "flywheel/judge.hpp"
#include "flywheel/proposer.hpp"
#include "flywheel/rollout.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

LlmGateway& StageContext::gateway() {
  if (gateway_) return *gateway_;
  std::shared_ptr<ChatBackend> backend;
  if (mock_llm) {
    if (!fs::exists(*mock_llm)) throw MissingInput("mock LLM script not found: " + *mock_llm);
    backend = MockBackend::from_file(*mock_llm);
  } else {
    HttpBackend::Options o;
    o.base_url = config.llm.base_url;
    o.api_key = config.llm.api_key;
    o.timeout = std::chrono::seconds(config.llm.timeout_s);
    o.images = config.llm.images;
    backend = std::make_shared<HttpBackend>(o);
  }
  GatewayConfig g;
  g.max_attempts = static_cast<int>(config.llm.max_attempts);
  g.backoff_base = std::chrono::milliseconds(config.llm.backoff_base_ms);
  g.backoff_factor = config.llm.backoff_factor;
  g.max_in_flight = static_cast<std::size_t>(config.llm.max_in_flight);
  g.token_cap = config.llm.token_cap;
  g.sleep = sleep;
  gateway_ = std::make_shared<LlmGateway>(std::move(backend), g);
  return *gateway_;
}

DriverFactory StageContext::driver_factory() const {
  const auto timeout = std::chrono::seconds(config.browser.timeout_s);
  const auto spec = driver.value_or("bridge:" + config.browser.bridge_url);
  if (spec.starts_with("replay:") && !fs::is_directory(spec.substr(7)))
    throw MissingInput("replay directory not found: " + spec.substr(7));
  return make_driver_factory(spec, timeout);
}

std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

namespace {

constexpr std::size_t kManifestErrorLimit = 100;

std::string trajectory_key(const Trajectory& t) { return t.site.host + "\n" + t.task; }

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw MissingInput("input not found: " + path);
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Tracks one stage invocation and writes its manifest.
class Run {
 public:
  Run(StageContext& ctx, std::string stage, std::string output)
      : ctx_(ctx), start_(Clock::now()) {
    report_.stage = std::move(stage);
    report_.output = std::move(output);
  }

  StageReport& report() { return report_; }
  json& counters() { return report_.counters; }

  void error(std::string message) {
    ++report_.partial_failures;
    report_.errors.push_back(std::move(message));
  }

  template <typename T>
  std::vector<T> load(const std::string& path) {
    require_file(path);
    JsonlReadResult r;
    auto out = load_jsonl<T>(path, &r);
    for (auto& e : r.errors) error(path + ": " + e);
    inputs_.push_back(path);
    return out;
  }

  void input(const std::string& path) { inputs_.push_back(path); }

  // Keys already present in the output when resuming.
  template <typename T, typename KeyFn>
  std::set<std::string> done_keys(KeyFn key) {
    std::set<std::string> keys;
    if (!ctx_.resume || !fs::exists(report_.output)) return keys;
    read_jsonl<T>(report_.output, [&](T&& v) { keys.insert(key(v)); });
    return keys;
  }

  std::unique_ptr<JsonlWriter> writer(bool append) {
    ensure_parent(report_.output);
    return std::make_unique<JsonlWriter>(report_.output, append && ctx_.resume && fs::exists(report_.output));
  }

  StageReport finish() {
    const double wall = std::chrono::duration<double>(Clock::now() - start_).count();
    json errors = json::array();
    for (std::size_t i = 0; i < report_.errors.size() && i < kManifestErrorLimit; ++i) errors.push_back(report_.errors[i]);
    json m{{"stage", report_.stage},
           {"config_hash", hex64(config_hash(ctx_.config))},
           {"seed", ctx_.config.seed},
           {"inputs", inputs_},
           {"output", report_.output},
           {"counters", report_.counters},
           {"partial_failures", report_.partial_failures},
           {"errors", std::move(errors)},
           {"wall_time_s", wall}};
    if (llm_used_) m["llm_usage"] = ctx_.gateway().usage();
    report_.manifest = m;
    if (!report_.output.empty()) {
      ensure_parent(report_.output);
      write_file(manifest_path(report_.output), m.dump(2) + "\n");
    }
    if (ctx_.log) {
      *ctx_.log << "[" << report_.stage << "] " << report_.counters.dump();
      if (report_.partial_failures) *ctx_.log << " (" << report_.partial_failures << " record failures)";
      *ctx_.log << "\n";
    }
    return report_;
  }

  LlmGateway& gateway() {
    llm_used_ = true;
    return ctx_.gateway();
  }

 private:
  StageContext& ctx_;
  Clock::time_point start_;
  StageReport report_;
  std::vector<std::string> inputs_;
  bool llm_used_ = false;
};

EncoderConfig encoder_config(const PipelineConfig& c) {
  EncoderConfig e;
  e.observation_token_budget = c.limits.observation_token_budget;
  return e;
}

EpisodeConfig episode_config(const PipelineConfig& c) {
  EpisodeConfig e;
  e.max_actions = c.limits.max_actions;
  e.agent_window = static_cast<std::size_t>(c.limits.agent_window);
  e.response_token_budget = c.limits.agent_trace_tokens;
  e.parse_retry_limit = static_cast<int>(c.limits.parse_retry_limit);
  e.temperature = c.limits.temperature;
  e.top_p = c.limits.top_p;
  e.top_k = c.limits.top_k;
  e.model = c.llm.model;
  e.encoder = encoder_config(c);
  e.browser_timeout = std::chrono::seconds(c.browser.timeout_s);
  if (c.browser.screenshots) e.screenshot_dir = c.browser.screenshot_dir;
  e.agent_images = c.llm.images;
  return e;
}

ProposerConfig proposer_config(const PipelineConfig& c) {
  ProposerConfig p;
  p.in_context_examples = static_cast<std::size_t>(c.limits.in_context_examples);
  p.window = static_cast<std::size_t>(c.limits.proposer_window);
  p.max_new_tokens = c.limits.proposer_trace_tokens;
  p.temperature = c.limits.temperature;
  p.top_p = c.limits.top_p;
  p.top_k = c.limits.top_k;
  p.model = c.llm.model;
  p.parse_retry_limit = static_cast<int>(c.limits.parse_retry_limit);
  p.encoder = encoder_config(c);
  return p;
}

JudgeConfig judge_config(const PipelineConfig& c) {
  JudgeConfig j;
  j.window = static_cast<std::size_t>(c.limits.judge_window);
  j.max_new_tokens = c.limits.judge_trace_tokens;
  j.temperature = c.limits.temperature;
  j.top_p = c.limits.top_p;
  j.top_k = c.limits.top_k;
  j.model = c.llm.model;
  j.parse_retry_limit = static_cast<int>(c.limits.parse_retry_limit);
  j.encoder = encoder_config(c);
  j.images = c.llm.images;
  return j;
}

json summary_json(const Stage2Summary& s) {
  json hist = json::object();
  for (const auto& [steps, n] : s.step_histogram) hist[std::to_string(steps)] = n;
  return json{{"episodes", s.episodes},     {"failed", s.failed},
              {"total_steps", s.total_steps}, {"mean_steps", s.mean_steps},
              {"off_site_steps", s.off_site_steps}, {"step_histogram", hist},
              {"terminations", s.terminations}};
}

// Shared by explore and rollout: one episode per input, skipping episodes
// already in the output.
StageReport episodes_stage(StageContext& ctx, const std::string& stage, const std::string& in, const std::string& out,
                           bool refined) {
  Run run(ctx, stage, out);
  const auto sites = run.load<SiteRecord>(in);
  const auto done = run.done_keys<Trajectory>(trajectory_key);

  std::vector<EpisodeInput> inputs;
  std::int64_t skipped = 0, resumed = 0;
  for (const auto& s : sites) {
    std::optional<std::string> task;
    if (s.safety == Safety::safe) {
      if (refined && s.refined_task) task = s.refined_task->proposed_task;
      if (!refined && s.seed_task) task = s.seed_task;
    }
    if (!task) {
      ++skipped;
      continue;
    }
    if (done.contains(s.host + "\n" + *task)) {
      ++resumed;
      continue;
    }
    inputs.push_back({s, *task});
  }

  const auto factory = ctx.driver_factory();
  const auto config = episode_config(ctx.config);
  auto result = run_stage2(inputs, factory, run.gateway(), config, static_cast<std::size_t>(ctx.config.workers.browser));

  auto writer = run.writer(true);
  for (const auto& o : result.outcomes) {
    if (o.trajectory) writer->write(*o.trajectory);
    else run.error(*o.error);
  }
  writer->flush();
  run.counters() = summary_json(result.summary);
  run.counters()["skipped_without_task"] = skipped;
  run.counters()["resumed"] = resumed;
  return run.finish();
}

}  // namespace

// --- stages ----------------------------------------------------------------------

StageReport run_ingest(StageContext& ctx, const std::string& rank_file, const std::string& out) {
  Run run(ctx, "ingest", out);
  require_file(rank_file);
  run.input(rank_file);
  const auto& ic = ctx.config.ingest;
  ColumnMap columns;
  columns.position = static_cast<std::size_t>(ic.position_column);
  columns.value = static_cast<std::size_t>(ic.value_column);
  columns.host = static_cast<std::size_t>(ic.host_column);
  const auto cc = ColumnMap::common_crawl();
  if (ic.check_header && columns.position == cc.position && columns.value == cc.value && columns.host == cc.host)
    columns.expected_header = cc.expected_header;

  TopKSelector top(static_cast<std::size_t>(ic.top_k));
  RankParseStats stats;
  try {
    stats = parse_rank_file(rank_file, columns, [&](SiteRecord&& r) { top.push(std::move(r)); });
  } catch (const RankFileError& e) {
    throw StageError(e.what());
  }
  const auto selected = top.result();
  auto writer = run.writer(false);
  for (const auto& r : selected) writer->write(r);
  writer->flush();
  run.counters() = {{"lines", stats.lines},
                    {"records", stats.records},
                    {"header_lines", stats.header_lines},
                    {"malformed", stats.malformed},
                    {"selected", selected.size()}};
  run.report().partial_failures = stats.malformed;
  return run.finish();
}

StageReport run_propose(StageContext& ctx, const std::string& in, const std::string& out) {
  Run run(ctx, "propose", out);
  auto sites = run.load<SiteRecord>(in);
  const auto done = run.done_keys<SiteRecord>([](const SiteRecord& s) { return s.host; });

  std::vector<SiteRecord> todo;
  std::set<std::string> seen;
  std::int64_t duplicates = 0, resumed = 0;
  for (auto& s : sites) {
    if (!seen.insert(s.host).second) {
      ++duplicates;
      continue;
    }
    if (done.contains(s.host)) {
      ++resumed;
      continue;
    }
    if (s.safety != Safety::unknown) {
      run.error(s.host + ": already annotated");
      continue;
    }
    todo.push_back(std::move(s));
  }

  auto result = run_stage1(todo, prompts::default_example_pool(), ctx.config.seed, run.gateway(),
                           proposer_config(ctx.config), static_cast<std::size_t>(ctx.config.workers.llm));
  auto writer = run.writer(true);
  for (const auto& o : result.outcomes) {
    if (o.error) run.error(o.site.host + ": " + *o.error);
    else writer->write(o.site);
  }
  writer->flush();
  const auto& s = result.summary;
  run.counters() = {{"sites", s.sites},       {"safe", s.safe},
                    {"unsafe", s.unsafe},     {"errors", s.errors},
                    {"safe_fraction", s.safe_fraction}, {"long_seed_tasks", s.long_seed_tasks},
                    {"duplicates", duplicates}, {"resumed", resumed}};
  return run.finish();
}

StageReport run_explore(StageContext& ctx, const std::string& sites, const std::string& out) {
  return episodes_stage(ctx, "explore", sites, out, false);
}

StageReport run_rollout(StageContext& ctx, const std::string& sites, const std::string& out) {
  return episodes_stage(ctx, "rollout", sites, out, true);
}

StageReport run_refine(StageContext& ctx, const std::string& in, const std::string& trajectories,
                       const std::string& out) {
  Run run(ctx, "refine", out);
  const auto sites = run.load<SiteRecord>(in);
  const auto explored = run.load<Trajectory>(trajectories);
  for (const auto& s : sites) {
    if (s.refined_task)
      throw StageError("refine: " + s.host + " already has a refined task; only one feedback pass is allowed");
  }
  std::map<std::string, const Trajectory*> by_key;
  for (const auto& t : explored) by_key.emplace(trajectory_key(t), &t);
  const auto done = run.done_keys<SiteRecord>([](const SiteRecord& s) { return s.host; });

  struct Job {
    SiteRecord site;
    const Trajectory* trajectory;
  };
  std::vector<Job> jobs;
  std::int64_t no_trajectory = 0, resumed = 0, not_safe = 0;
  for (const auto& s : sites) {
    if (s.safety != Safety::safe || !s.seed_task) {
      ++not_safe;
      continue;
    }
    if (done.contains(s.host)) {
      ++resumed;
      continue;
    }
    auto it = by_key.find(s.host + "\n" + *s.seed_task);
    if (it == by_key.end()) {
      ++no_trajectory;
      run.error(s.host + ": no exploration trajectory");
      continue;
    }
    jobs.push_back({s, it->second});
  }

  auto& gateway = run.gateway();
  const auto config = proposer_config(ctx.config);
  ProposerWarnings warnings;
  struct Out {
    std::optional<SiteRecord> site;
    std::optional<std::string> error;
  };
  const auto results = parallel_map(jobs, static_cast<std::size_t>(ctx.config.workers.llm), [&](const Job& j) {
    Out o;
    try {
      auto site = j.site;
      site.refined_task = propose_refined(j.site, *j.trajectory, gateway, config, &warnings);
      o.site = std::move(site);
    } catch (const std::exception& e) {
      o.error = j.site.host + ": " + e.what();
    }
    return o;
  });
  auto writer = run.writer(true);
  std::int64_t refined = 0;
  for (const auto& o : results) {
    if (o.site) {
      writer->write(*o.site);
      ++refined;
    } else {
      run.error(*o.error);
    }
  }
  writer->flush();
  run.counters() = {{"sites", sites.size()},
                    {"refined", refined},
                    {"failed", static_cast<std::int64_t>(jobs.size()) - refined},
                    {"not_safe", not_safe},
                    {"no_trajectory", no_trajectory},
                    {"resumed", resumed},
                    {"parse_retries", warnings.refine_parse_retries.load()}};
  return run.finish();
}

StageReport run_judge(StageContext& ctx, const std::string& in, const std::string& out) {
  Run run(ctx, "judge", out);
  const auto trajectories = run.load<Trajectory>(in);
  const auto done = run.done_keys<Trajectory>(trajectory_key);
  std::vector<Trajectory> todo;
  std::int64_t resumed = 0;
  for (const auto& t : trajectories) {
    if (done.contains(trajectory_key(t))) ++resumed;
    else todo.push_back(t);
  }
  auto result = run_stage3(todo, run.gateway(), judge_config(ctx.config),
                           static_cast<std::size_t>(ctx.config.workers.llm));
  auto writer = run.writer(true);
  for (const auto& item : result.items) {
    if (item.trajectory.judge) writer->write(item.trajectory);
    else run.error(*item.error);
  }
  writer->flush();
  const auto& s = result.summary;
  run.counters() = {{"trajectories", s.trajectories},
                    {"scored", s.scored},
                    {"unscorable", s.unscorable},
                    {"success_rate", s.success_rate},
                    {"mean_efficiency", s.mean_efficiency},
                    {"mean_self_correction", s.mean_self_correction},
                    {"clamped_scores", s.clamped_scores},
                    {"resumed", resumed}};
  return run.finish();
}

StageReport run_filter(StageContext& ctx, const std::string& in, const std::string& out) {
  Run run(ctx, "filter", out);
  const auto scored = run.load<Trajectory>(in);
  Partition p;
  try {
    p = partition_success(scored);
  } catch (const std::invalid_argument& e) {
    throw StageError(std::string("filter: ") + e.what());
  }
  auto writer = run.writer(false);
  for (const auto& t : p.kept) writer->write(t);
  writer->flush();
  run.counters() = {{"input", scored.size()},
                    {"kept", p.kept.size()},
                    {"rejected", p.rejected.size()},
                    {"kept_fraction", scored.empty() ? 0.0 : static_cast<double>(p.kept.size()) /
                                                                 static_cast<double>(scored.size())}};
  return run.finish();
}

StageReport run_export(StageContext& ctx, const std::string& in, const std::string& out) {
  Run run(ctx, "export", out);
  auto kept = run.load<Trajectory>(in);
  if (ctx.config.export_.scrub_pii)
    for (auto& t : kept) t = scrub_trajectory(t);
  auto built = build_sft_dataset(kept, static_cast<std::size_t>(ctx.config.limits.agent_window),
                                 ctx.config.limits.max_sequence_tokens, encoder_config(ctx.config));
  const auto manifest = assign_splits(built.records, static_cast<int>(ctx.config.export_.test_percent));
  auto writer = run.writer(false);
  for (const auto& r : built.records) writer->write(r);
  writer->flush();
  json index = to_json(manifest);
  index["sft"] = fs::path(out).filename().string();
  index["window"] = ctx.config.limits.agent_window;
  index["max_sequence_tokens"] = ctx.config.limits.max_sequence_tokens;
  write_file(out + ".index.json", index.dump(2) + "\n");
  run.counters() = {{"trajectories", kept.size()},
                    {"records", built.records.size()},
                    {"dropped_over_budget", built.dropped_over_budget},
                    {"skipped_without_action", built.skipped_without_action},
                    {"train_records", manifest.records.at("train")},
                    {"test_records", manifest.records.at("test")},
                    {"pii_scrubbed", ctx.config.export_.scrub_pii}};
  return run.finish();
}

StageReport run_categorize(StageContext& ctx, const std::string& in, const std::string& out) {
  Run run(ctx, "categorize", out);
  const auto trajectories = run.load<Trajectory>(in);
  std::vector<CategorizeInput> tasks;
  std::set<std::string> seen;
  for (const auto& t : trajectories)
    if (seen.insert(t.task).second) tasks.push_back({t.site.host, t.task});

  CategorizeConfig cc;
  cc.temperature = ctx.config.limits.temperature;
  cc.top_p = ctx.config.limits.top_p;
  cc.model = ctx.config.llm.model;
  const auto result = categorize_tasks(tasks, run.gateway(), cc, static_cast<std::size_t>(ctx.config.workers.llm));
  for (const auto& t : tasks)
    if (!result.category_by_task.contains(t.task)) run.error("uncategorized: " + t.task);

  json doc{{"category_by_task", result.category_by_task},
           {"histogram", result.histogram},
           {"mean_tasks_per_category", result.mean_tasks_per_category},
           {"truncated", result.truncated},
           {"failed", result.failed}};
  std::vector<Trajectory> scored;
  for (const auto& t : trajectories)
    if (t.judge && result.category_by_task.contains(t.task)) scored.push_back(t);
  if (!scored.empty())
    doc["category_success"] = to_json(category_success_report(scored, result.category_by_task,
                                                              ctx.config.evals.min_category_n));
  ensure_parent(out);
  write_file(out, doc.dump(2) + "\n");
  run.counters() = {{"tasks", tasks.size()},
                    {"categories", result.histogram.size()},
                    {"truncated", result.truncated},
                    {"failed", result.failed},
                    {"mean_tasks_per_category", result.mean_tasks_per_category}};
  return run.finish();
}

StageReport run_stats(StageContext& ctx, const std::string& in, const std::optional<std::string>& out,
                      std::ostream& text) {
  Run run(ctx, "stats", out.value_or(""));
  const auto trajectories = run.load<Trajectory>(in);
  const auto stats = dataset_stats(trajectories);
  text << to_text(stats);
  if (out) {
    ensure_parent(*out);
    write_file(*out, to_json(stats).dump(2) + "\n");
  }
  run.counters() = to_json(stats);
  return run.finish();
}

namespace {

std::map<std::string, bool> load_safety_labels(const std::string& path) {
  require_file(path);
  const auto text = read_file(path);
  std::map<std::string, bool> labels;
  try {
    const auto doc = json::parse(text);
    if (doc.is_object()) {
      for (auto it = doc.begin(); it != doc.end(); ++it) labels[it.key()] = it.value().get<bool>();
      return labels;
    }
  } catch (const json::parse_error&) {
    // Not a single document; read as JSONL below.
  }
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (trim(line).empty()) continue;
    const auto j = json::parse(line);
    labels[j.at("host").get<std::string>()] = j.at("unsafe").get<bool>();
  }
  return labels;
}

void emit_table(const Table& table, const json& doc, const std::optional<std::string>& out,
                const std::optional<std::string>& csv, std::ostream& text) {
  text << render_text(table);
  if (out) {
    ensure_parent(*out);
    write_file(*out, doc.dump(2) + "\n");
  }
  if (csv) {
    ensure_parent(*csv);
    write_file(*csv, render_csv(table));
  }
}

}  // namespace

StageReport run_eval_safety(StageContext& ctx, const std::string& sites, const std::string& labels_path,
                            const std::optional<std::string>& out, const std::optional<std::string>& csv,
                            std::ostream& text) {
  Run run(ctx, "eval-safety", out.value_or(""));
  const auto records = run.load<SiteRecord>(sites);
  const auto labels = load_safety_labels(labels_path);
  run.input(labels_path);
  std::map<std::string, bool> predicted;
  for (const auto& s : records) {
    if (s.safety == Safety::unknown) {
      run.error(s.host + ": no safety verdict");
      continue;
    }
    predicted[s.host] = s.safety == Safety::unsafe;
  }
  SafetyMetrics m;
  try {
    m = safety_metrics(predicted, labels);
  } catch (const KeyMismatch& e) {
    throw StageError(e.what());
  }
  emit_table(to_table(m), to_json(m), out, csv, text);
  run.counters() = to_json(m);
  return run.finish();
}

StageReport run_eval_judge(StageContext& ctx, const std::string& scored_path, const std::string& labels_path,
                           const std::optional<std::string>& out, const std::optional<std::string>& csv,
                           std::ostream& text) {
  Run run(ctx, "eval-judge", out.value_or(""));
  const auto scored = run.load<Trajectory>(scored_path);
  require_file(labels_path);
  run.input(labels_path);
  std::map<std::string, bool> labels;
  {
    std::ifstream in(labels_path);
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto j = json::parse(line);
      labels[j.at("host").get<std::string>() + "\n" + j.at("task").get<std::string>()] = j.at("success").get<bool>();
    }
  }
  std::vector<JudgeScores> scores;
  std::vector<double> ranks;
  std::vector<std::uint8_t> agreement;  // human label per kept item
  for (const auto& t : scored) {
    if (!t.judge) continue;
    auto it = labels.find(trajectory_key(t));
    if (it == labels.end()) {
      run.error(t.site.host + ": no human label");
      continue;
    }
    scores.push_back(*t.judge);
    agreement.push_back(it->second);
    ranks.push_back(t.site.rank_value);
  }
  // std::vector<bool> is not contiguous, so the labels go through a plain array.
  auto flags = std::make_unique<bool[]>(agreement.size());
  for (std::size_t i = 0; i < agreement.size(); ++i) flags[i] = agreement[i] != 0;
  const auto report = judge_accuracy_report(scores, std::span<const bool>(flags.get(), agreement.size()),
                                            std::span<const double>(ranks));
  emit_table(to_table(report), to_json(report), out, csv, text);
  run.counters() = {{"items", report.n}, {"accuracy", report.accuracy ? json(*report.accuracy) : json(nullptr)}};
  return run.finish();
}

// --- run-all ---------------------------------------------------------------------

RunAllPaths run_all_paths(const std::string& workdir) {
  auto p = [&](const char* name) { return (fs::path(workdir) / name).string(); };
  return {p("sites.jsonl"),        p("tasks.jsonl"),  p("explore.jsonl"), p("refined.jsonl"),
          p("trajectories.jsonl"), p("scored.jsonl"), p("kept.jsonl"),    p("sft.jsonl")};
}

std::vector<StageReport> run_all(StageContext& ctx, const std::string& rank_file, const std::string& workdir) {
  fs::create_directories(workdir);
  const auto p = run_all_paths(workdir);
  std::vector<StageReport> reports;
  reports.push_back(run_ingest(ctx, rank_file, p.sites));
  reports.push_back(run_propose(ctx, p.sites, p.tasks));
  reports.push_back(run_explore(ctx, p.tasks, p.explore));
  reports.push_back(run_refine(ctx, p.tasks, p.explore, p.refined));
  reports.push_back(run_rollout(ctx, p.refined, p.trajectories));
  reports.push_back(run_judge(ctx, p.trajectories, p.scored));
  reports.push_back(run_filter(ctx, p.scored, p.kept));
  reports.push_back(run_export(ctx, p.kept, p.sft));
  return reports;
}

}  // namespace flywheel
