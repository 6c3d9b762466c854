#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "flywheel/curation.hpp"
#include "flywheel/jsonl.hpp"
#include "flywheel/stages.hpp"
#include "flywheel/util.hpp"
#include "test_support.hpp"

namespace flywheel {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::fixture;

StageContext e2e_context() {
  StageContext ctx;
  ctx.config = load_config(fixture("e2e/config.toml"), [](const std::string&) { return std::nullopt; });
  ctx.mock_llm = fixture("e2e/mock_llm.json");
  ctx.driver = "replay:" + fixture("e2e/replay");
  ctx.sleep = [](std::chrono::milliseconds) {};
  return ctx;
}

std::map<std::string, Trajectory> by_host(const std::vector<Trajectory>& ts) {
  std::map<std::string, Trajectory> m;
  for (const auto& t : ts) m.emplace(t.site.host, t);
  return m;
}

class RunAll : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(testing::scratch_dir("stages-e2e"));
    auto ctx = e2e_context();
    reports_ = new std::vector<StageReport>(run_all(ctx, fixture("e2e/ranks.txt"), dir_->string()));
  }
  static void TearDownTestSuite() {
    delete reports_;
    delete dir_;
  }
  static const StageReport& report(const std::string& stage) {
    for (const auto& r : *reports_)
      if (r.stage == stage) return r;
    throw std::runtime_error("no stage " + stage);
  }
  static RunAllPaths paths() { return run_all_paths(dir_->string()); }

  static fs::path* dir_;
  static std::vector<StageReport>* reports_;
};
fs::path* RunAll::dir_ = nullptr;
std::vector<StageReport>* RunAll::reports_ = nullptr;

TEST_F(RunAll, IngestKeepsTopTen) {
  const auto& r = report("ingest");
  EXPECT_EQ(r.counters.at("selected"), 10);
  EXPECT_EQ(r.counters.at("malformed"), 1);
  const auto sites = load_jsonl<SiteRecord>(paths().sites);
  ASSERT_EQ(sites.size(), 10u);
  EXPECT_EQ(sites.front().host, "alpha-bakery.com");
  EXPECT_EQ(sites.back().host, "juliet-jewelry.com");
}

TEST_F(RunAll, ProposeMarksFourUnsafe) {
  const auto& r = report("propose");
  EXPECT_EQ(r.counters.at("safe"), 6);
  EXPECT_EQ(r.counters.at("unsafe"), 4);
  EXPECT_EQ(r.partial_failures, 0);  // the 503 was retried
  for (const auto& s : load_jsonl<SiteRecord>(paths().tasks)) EXPECT_EQ(s.seed_task.has_value(), s.safety == Safety::safe);
}

TEST_F(RunAll, ExploreAndRefine) {
  EXPECT_EQ(report("explore").counters.at("episodes"), 6);
  EXPECT_EQ(report("explore").counters.at("skipped_without_task"), 4);
  const auto explore = by_host(load_jsonl<Trajectory>(paths().explore));
  EXPECT_EQ(explore.at("bravo-books.net").steps.at(0).parse_retries, 1);
  EXPECT_EQ(report("refine").counters.at("refined"), 6);
  for (const auto& s : load_jsonl<SiteRecord>(paths().refined)) {
    ASSERT_TRUE(s.refined_task);
    EXPECT_TRUE(s.refined_task->proposed_task.starts_with("Add the Starter kit"));
  }
}

TEST_F(RunAll, RolloutTerminations) {
  const auto t = by_host(load_jsonl<Trajectory>(paths().trajectories));
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at("alpha-bakery.com").termination, Termination::stopped);
  EXPECT_EQ(t.at("alpha-bakery.com").final_answer, "$19.00");
  EXPECT_EQ(t.at("bravo-books.net").steps.at(0).parse_retries, 1);
  EXPECT_EQ(t.at("bravo-books.net").termination, Termination::stopped);
  EXPECT_EQ(t.at("charlie-cycles.org").termination, Termination::parse_error);
  EXPECT_EQ(t.at("echo-electronics.com").termination, Termination::browser_error);
  EXPECT_EQ(t.at("foxtrot-farms.org").termination, Termination::stopped);
  EXPECT_TRUE(t.at("foxtrot-farms.org").steps.front().off_site);
  EXPECT_EQ(t.at("hotel-harbor.com").steps.size(), 4u);
}

TEST_F(RunAll, JudgeFilterExport) {
  EXPECT_EQ(report("judge").counters.at("scored"), 6);
  EXPECT_EQ(report("judge").counters.at("clamped_scores"), 1);
  const auto kept = load_jsonl<Trajectory>(paths().kept);
  ASSERT_EQ(kept.size(), 3u);
  for (const auto& t : kept) EXPECT_EQ(t.judge->success, 1.0);

  const auto sft = load_jsonl<SftRecord>(paths().sft);
  std::int64_t actions = 0;
  for (const auto& t : kept)
    for (const auto& s : t.steps) actions += s.action.has_value();
  EXPECT_EQ(static_cast<std::int64_t>(sft.size()), actions);
  for (const auto& r : sft) {
    EXPECT_NO_THROW(validate(r));
    EXPECT_TRUE(r.meta.split == "train" || r.meta.split == "test");
  }
  const auto index = json::parse(read_file(paths().sft + ".index.json"));
  EXPECT_EQ(index.at("train").at("records").get<std::int64_t>() + index.at("test").at("records").get<std::int64_t>(),
            static_cast<std::int64_t>(sft.size()));
}

TEST_F(RunAll, ManifestsNextToOutputs) {
  for (const auto& r : *reports_) {
    ASSERT_TRUE(fs::exists(manifest_path(r.output))) << r.stage;
    const auto m = json::parse(read_file(manifest_path(r.output)));
    EXPECT_EQ(m.at("stage"), r.stage);
    EXPECT_EQ(m.at("seed"), 1234);
    EXPECT_TRUE(m.contains("config_hash"));
  }
}

TEST_F(RunAll, StatsAreConsistent) {
  auto ctx = e2e_context();
  std::ostringstream text;
  const auto r = run_stats(ctx, paths().scored, std::nullopt, text);
  std::int64_t steps = 0, actions = 0;
  const auto scored = load_jsonl<Trajectory>(paths().scored);
  for (const auto& t : scored)
    for (const auto& s : t.steps) {
      ++steps;
      actions += s.action.has_value();
    }
  EXPECT_EQ(r.counters.at("action_traces"), steps);
  EXPECT_EQ(r.counters.at("parsed_actions"), actions);
  EXPECT_EQ(r.counters.at("judge_traces"), static_cast<std::int64_t>(scored.size()));
  EXPECT_NE(text.str().find("judge traces"), std::string::npos);
}

TEST_F(RunAll, ResumeSkipsFinishedRecords) {
  const auto before = read_file(paths().trajectories);
  auto ctx = e2e_context();
  const auto r = run_rollout(ctx, paths().refined, paths().trajectories);
  EXPECT_EQ(r.counters.at("resumed"), 6);
  EXPECT_EQ(r.counters.at("episodes"), 0);
  EXPECT_EQ(read_file(paths().trajectories), before);
  EXPECT_EQ(ctx.gateway().usage().requests, 0);
}

TEST_F(RunAll, SecondRefinePassIsRejected) {
  auto ctx = e2e_context();
  EXPECT_THROW(run_refine(ctx, paths().refined, paths().explore, (*dir_ / "refined2.jsonl").string()), StageError);
}

TEST_F(RunAll, SafetyEvaluation) {
  auto ctx = e2e_context();
  std::ostringstream text;
  const auto csv = (*dir_ / "safety.csv").string();
  const auto r = run_eval_safety(ctx, paths().tasks, fixture("e2e/safety_labels.json"), std::nullopt, csv, text);
  EXPECT_EQ(r.counters.at("tp"), 4);
  EXPECT_EQ(r.counters.at("tn"), 6);
  EXPECT_EQ(r.counters.at("accuracy"), 1.0);
  EXPECT_TRUE(read_file(csv).starts_with("tp,fn,fp,tn,"));
}

TEST_F(RunAll, JudgeEvaluation) {
  auto ctx = e2e_context();
  const auto labels = (*dir_ / "judge_labels.jsonl").string();
  std::string body;
  for (const auto& t : load_jsonl<Trajectory>(paths().scored))
    body += json{{"host", t.site.host}, {"task", t.task}, {"success", t.site.host != "bravo-books.net"}}.dump() + "\n";
  write_file(labels, body);
  std::ostringstream text;
  const auto r = run_eval_judge(ctx, paths().scored, labels, std::nullopt, std::nullopt, text);
  EXPECT_EQ(r.counters.at("items"), 6);
  // Labels agree with the judge on alpha and hotel only.
  EXPECT_NEAR(r.counters.at("accuracy").get<double>(), 2.0 / 6.0, 1e-12);
}

TEST_F(RunAll, Categorize) {
  auto ctx = e2e_context();
  const auto out = (*dir_ / "categories.json").string();
  const auto r = run_categorize(ctx, paths().scored, out);
  EXPECT_EQ(r.counters.at("tasks"), 6);
  EXPECT_EQ(r.counters.at("failed"), 0);
  const auto doc = json::parse(read_file(out));
  EXPECT_EQ(doc.at("histogram").at("online shopping"), 6);
}

TEST(Stages, MissingInputs) {
  auto ctx = e2e_context();
  const auto dir = testing::scratch_dir("stages-missing");
  EXPECT_THROW(run_ingest(ctx, (dir / "nope.txt").string(), (dir / "out.jsonl").string()), MissingInput);
  EXPECT_THROW(run_judge(ctx, (dir / "nope.jsonl").string(), (dir / "out.jsonl").string()), MissingInput);
  ctx.mock_llm = (dir / "nope.json").string();
  write_file((dir / "t.jsonl").string(), serialize_record(testing::trajectory("a.com", 1)) + "\n");
  EXPECT_THROW(run_judge(ctx, (dir / "t.jsonl").string(), (dir / "out.jsonl").string()), MissingInput);
}

TEST(Stages, FilterRejectsUnscoredInput) {
  auto ctx = e2e_context();
  const auto dir = testing::scratch_dir("stages-filter");
  write_file((dir / "t.jsonl").string(), serialize_record(testing::trajectory("a.com", 1)) + "\n");
  EXPECT_THROW(run_filter(ctx, (dir / "t.jsonl").string(), (dir / "kept.jsonl").string()), StageError);
}

TEST(Stages, BadLinesAreCountedNotFatal) {
  auto ctx = e2e_context();
  const auto dir = testing::scratch_dir("stages-badlines");
  const auto in = (dir / "scored.jsonl").string();
  write_file(in, serialize_record(testing::scored(testing::trajectory("a.com", 2), 1.0)) + "\n{not json\n");
  const auto r = run_filter(ctx, in, (dir / "kept.jsonl").string());
  EXPECT_EQ(r.counters.at("kept"), 1);
  EXPECT_EQ(r.partial_failures, 1);
}

}  // namespace
}  // namespace flywheel
