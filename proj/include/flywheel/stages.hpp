#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/config.hpp"
#include "flywheel/driver.hpp"
#include "flywheel/llm.hpp"

namespace flywheel {

// A stage input file is missing or unusable (CLI exit code 2).
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The stage cannot run on this input at all (CLI exit code 1).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageContext {
  PipelineConfig config;
  std::optional<std::string> mock_llm;  // mock script path; real endpoint otherwise
  std::optional<std::string> driver;    // replay:<dir> or bridge:<url>
  bool resume = true;
  std::ostream* log = nullptr;
  // Gateway sleep override, for tests.
  std::function<void(std::chrono::milliseconds)> sleep;

  LlmGateway& gateway();
  DriverFactory driver_factory() const;

 private:
  std::shared_ptr<LlmGateway> gateway_;
};

struct StageReport {
  std::string stage;
  nlohmann::json counters = nlohmann::json::object();
  std::vector<std::string> errors;  // per-record failures
  std::int64_t partial_failures = 0;
  std::string output;

  nlohmann::json manifest;  // as written next to the output
};

// <out>.manifest.json
std::string manifest_path(const std::string& output);

StageReport run_ingest(StageContext& ctx, const std::string& rank_file, const std::string& out);
StageReport run_propose(StageContext& ctx, const std::string& sites, const std::string& out);
StageReport run_explore(StageContext& ctx, const std::string& sites, const std::string& out);
StageReport run_refine(StageContext& ctx, const std::string& sites, const std::string& trajectories,
                       const std::string& out);
StageReport run_rollout(StageContext& ctx, const std::string& sites, const std::string& out);
StageReport run_judge(StageContext& ctx, const std::string& trajectories, const std::string& out);
StageReport run_filter(StageContext& ctx, const std::string& scored, const std::string& out);
// Writes SFT JSONL to out and the split index to <out>.index.json.
StageReport run_export(StageContext& ctx, const std::string& kept, const std::string& out);
StageReport run_categorize(StageContext& ctx, const std::string& trajectories, const std::string& out);

// Stats of a trajectory file; JSON goes to out when given.
StageReport run_stats(StageContext& ctx, const std::string& trajectories, const std::optional<std::string>& out,
                      std::ostream& text);

// labels: JSON object host -> bool (unsafe), or JSONL of {"host", "unsafe"}.
StageReport run_eval_safety(StageContext& ctx, const std::string& sites, const std::string& labels,
                            const std::optional<std::string>& out, const std::optional<std::string>& csv,
                            std::ostream& text);
// labels: JSONL of {"host", "task", "success": bool}.
StageReport run_eval_judge(StageContext& ctx, const std::string& scored, const std::string& labels,
                           const std::optional<std::string>& out, const std::optional<std::string>& csv,
                           std::ostream& text);

struct RunAllPaths {
  std::string sites, tasks, explore, refined, trajectories, scored, kept, sft;
};
RunAllPaths run_all_paths(const std::string& workdir);

// ingest -> propose -> explore -> refine -> rollout -> judge -> filter -> export
std::vector<StageReport> run_all(StageContext& ctx, const std::string& rank_file, const std::string& workdir);

}  // namespace flywheel
