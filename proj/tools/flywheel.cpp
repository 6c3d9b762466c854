// Command-line front end for the data pipeline stages.
//
// Exit codes: 0 success, 1 fatal error (or record failures under --strict),
// 2 missing input or bad usage.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "flywheel/stages.hpp"

namespace fs = std::filesystem;
using flywheel::StageContext;
using flywheel::StageReport;

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> mock_llm;
  std::optional<std::string> driver;
  bool strict = false;
  bool no_resume = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "TOML config file");
  app->add_option("--mock-llm", c.mock_llm, "scripted LLM responses (JSON) instead of a live endpoint");
  app->add_option("--driver", c.driver, "browser driver: replay:<dir> or bridge:<url>");
  app->add_flag("--strict", c.strict, "exit 1 when any record failed");
  app->add_flag("--no-resume", c.no_resume, "rewrite outputs instead of skipping finished records");
  app->add_flag("-q,--quiet", c.quiet, "no progress lines on stderr");
}

int finish(const Common& c, const std::vector<StageReport>& reports) {
  std::int64_t failures = 0;
  for (const auto& r : reports) failures += r.partial_failures;
  if (failures && !c.quiet) {
    for (const auto& r : reports)
      for (std::size_t i = 0; i < r.errors.size() && i < 5; ++i) std::cerr << "  " << r.stage << ": " << r.errors[i] << "\n";
  }
  return c.strict && failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Web-agent data pipeline: propose tasks, run agents, judge and curate trajectories"};
  app.require_subcommand(1);
  Common common;
  std::string in, out, workdir, trajectories, labels;
  std::optional<std::string> out_opt, csv;

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    add_common(s, common);
    return s;
  };
  auto need_in = [&](CLI::App* s, const char* help) { s->add_option("--in", in, help)->required(); };
  auto need_out = [&](CLI::App* s, const char* help) { s->add_option("--out", out, help)->required(); };

  auto* ingest = sub("ingest", "select top-K hosts from a host-rank file");
  need_in(ingest, "rank file (.txt or .txt.gz)");
  need_out(ingest, "sites JSONL");
  auto* propose = sub("propose", "seed task and safety verdict per site");
  need_in(propose, "sites JSONL");
  need_out(propose, "annotated sites JSONL");
  auto* explore = sub("explore", "run the agent on seed tasks");
  need_in(explore, "annotated sites JSONL");
  need_out(explore, "trajectories JSONL");
  auto* refine = sub("refine", "propose harder tasks from exploration trajectories");
  need_in(refine, "annotated sites JSONL");
  refine->add_option("--trajectories", trajectories, "exploration trajectories JSONL")->required();
  need_out(refine, "refined sites JSONL");
  auto* rollout = sub("rollout", "run the agent on refined tasks");
  need_in(rollout, "refined sites JSONL");
  need_out(rollout, "trajectories JSONL");
  auto* judge = sub("judge", "score trajectories");
  need_in(judge, "trajectories JSONL");
  need_out(judge, "scored trajectories JSONL");
  auto* filter = sub("filter", "keep trajectories judged fully successful");
  need_in(filter, "scored trajectories JSONL");
  need_out(filter, "kept trajectories JSONL");
  auto* exporter = sub("export", "write SFT records and the split index");
  need_in(exporter, "kept trajectories JSONL");
  need_out(exporter, "SFT JSONL");
  auto* stats = sub("stats", "dataset counters for a trajectory file");
  need_in(stats, "trajectories JSONL");
  stats->add_option("--out", out_opt, "also write the stats as JSON");
  auto* categorize = sub("categorize", "assign a short category to every task");
  need_in(categorize, "trajectories JSONL");
  need_out(categorize, "categories JSON");
  auto* eval_safety = sub("eval-safety", "safety filter accuracy against labels");
  need_in(eval_safety, "annotated sites JSONL");
  eval_safety->add_option("--labels", labels, "host -> unsafe labels (JSON or JSONL)")->required();
  eval_safety->add_option("--out", out_opt, "report JSON");
  eval_safety->add_option("--csv", csv, "report CSV");
  auto* eval_judge = sub("eval-judge", "judge accuracy against human labels");
  need_in(eval_judge, "scored trajectories JSONL");
  eval_judge->add_option("--labels", labels, "JSONL of {host, task, success}")->required();
  eval_judge->add_option("--out", out_opt, "report JSON");
  eval_judge->add_option("--csv", csv, "report CSV");
  auto* run_all = sub("run-all", "ingest through export in one working directory");
  need_in(run_all, "rank file");
  run_all->add_option("--workdir", workdir, "directory for all stage outputs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse failure is a usage error.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    StageContext ctx;
    ctx.config = flywheel::load_config(common.config);
    ctx.mock_llm = common.mock_llm;
    ctx.driver = common.driver;
    ctx.resume = !common.no_resume;
    ctx.log = common.quiet ? nullptr : &std::cerr;

    std::vector<StageReport> reports;
    if (ingest->parsed()) reports.push_back(flywheel::run_ingest(ctx, in, out));
    else if (propose->parsed()) reports.push_back(flywheel::run_propose(ctx, in, out));
    else if (explore->parsed()) reports.push_back(flywheel::run_explore(ctx, in, out));
    else if (refine->parsed()) reports.push_back(flywheel::run_refine(ctx, in, trajectories, out));
    else if (rollout->parsed()) reports.push_back(flywheel::run_rollout(ctx, in, out));
    else if (judge->parsed()) reports.push_back(flywheel::run_judge(ctx, in, out));
    else if (filter->parsed()) reports.push_back(flywheel::run_filter(ctx, in, out));
    else if (exporter->parsed()) reports.push_back(flywheel::run_export(ctx, in, out));
    else if (stats->parsed()) reports.push_back(flywheel::run_stats(ctx, in, out_opt, std::cout));
    else if (categorize->parsed()) reports.push_back(flywheel::run_categorize(ctx, in, out));
    else if (eval_safety->parsed())
      reports.push_back(flywheel::run_eval_safety(ctx, in, labels, out_opt, csv, std::cout));
    else if (eval_judge->parsed())
      reports.push_back(flywheel::run_eval_judge(ctx, in, labels, out_opt, csv, std::cout));
    else if (run_all->parsed()) reports = flywheel::run_all(ctx, in, workdir);
    return finish(common, reports);
  } catch (const flywheel::MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const flywheel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
