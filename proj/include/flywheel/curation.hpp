#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/encoder.hpp"
#include "flywheel/llm.hpp"
#include "flywheel/model.hpp"

namespace flywheel {

inline constexpr std::int64_t kDefaultSequenceBudget = 16384;

// --- filtering ---------------------------------------------------------------

struct Partition {
  std::vector<Trajectory> kept;
  std::vector<Trajectory> rejected;
};

// Keeps trajectories whose judge success is exactly 1.0, in input order.
// Throws std::invalid_argument if any trajectory is unscored.
std::vector<Trajectory> filter_success(const std::vector<Trajectory>& scored);
Partition partition_success(const std::vector<Trajectory>& scored);

// --- SFT records -------------------------------------------------------------

struct SftMeta {
  std::string host;
  std::string task;
  std::int64_t step_index = 0;
  std::optional<JudgeScores> judge;
  std::string split;  // "train" / "test", set at export

  bool operator==(const SftMeta&) const = default;
};

struct SftRecord {
  std::string system;
  std::string context;  // the agent prompt at this step
  std::string target;   // the agent's full response at this step
  SftMeta meta;

  bool operator==(const SftRecord&) const = default;
};

std::int64_t token_estimate(const SftRecord& r, const EncoderConfig& tokens = {});

void validate(const SftRecord& r);
void to_json(nlohmann::json& j, const SftRecord& r);
void from_json(const nlohmann::json& j, SftRecord& r);

struct SftBuildResult {
  std::vector<SftRecord> records;
  std::int64_t dropped_over_budget = 0;
  std::int64_t skipped_without_action = 0;
};

// One record per step of every trajectory. The context is exactly what the
// agent saw: the task plus min(window, index + 1) webpages, with the actions
// taken on the earlier ones. Records above seq_budget tokens are dropped.
SftBuildResult build_sft_dataset(const std::vector<Trajectory>& kept, std::size_t window = 5,
                                 std::int64_t seq_budget = kDefaultSequenceBudget, const EncoderConfig& encoder = {});

// --- train/test split ----------------------------------------------------------

// Whole sites go to one split: test when fnv1a64(host) % 100 < test_percent.
std::string split_for_host(std::string_view host, int test_percent);

struct SplitManifest {
  std::map<std::string, std::vector<std::string>> hosts;  // split -> sorted hosts
  std::map<std::string, std::int64_t> records;            // split -> record count
};

// Sets meta.split on every record and returns the manifest.
SplitManifest assign_splits(std::vector<SftRecord>& records, int test_percent);
nlohmann::json to_json(const SplitManifest& m);

// --- interleaving --------------------------------------------------------------

enum class DataSource { human, synthetic };

struct Draw {
  DataSource source;
  std::size_t index;

  bool operator==(const Draw&) const = default;
};

struct InterleaveOptions {
  double p_real = 0.8;
  std::uint64_t seed = 0;
  // Stop after this many draws; by default stop when both sources are used up.
  std::optional<std::size_t> max_draws;
  bool with_replacement = false;
};

struct InterleaveResult {
  std::vector<Draw> draws;
  // Draws that wanted the exhausted source and took the other one instead.
  std::int64_t redirected_draws = 0;
  std::int64_t exhaustion_warnings = 0;
};

// Each draw picks the human source with probability p_real. Without
// replacement, records are taken from each source in order. Deterministic in
// (sizes, options).
InterleaveResult interleave(std::size_t n_human, std::size_t n_synthetic, const InterleaveOptions& options);

// --- statistics ----------------------------------------------------------------

inline constexpr std::size_t kHistogramBins = 10;
using Histogram = std::array<std::int64_t, kHistogramBins>;

// Bins of width 0.1 over [0,1]; 1.0 lands in the last bin.
std::size_t histogram_bin(double value);

struct DatasetStats {
  std::int64_t trajectories = 0;
  std::int64_t action_traces = 0;  // one per recorded step
  std::int64_t parsed_actions = 0;  // steps whose response held a valid action
  std::int64_t screenshots = 0;
  std::int64_t judge_traces = 0;  // scored trajectories
  std::int64_t successes = 0;
  double success_rate = 0.0;  // successes / judge_traces
  double mean_steps = 0.0;
  Histogram efficiency{};
  Histogram self_correction{};
  std::map<std::string, std::int64_t> terminations;
};

DatasetStats dataset_stats(const std::vector<Trajectory>& trajectories);
nlohmann::json to_json(const DatasetStats& s);
std::string to_text(const DatasetStats& s);

// --- task categories -----------------------------------------------------------

struct CategorizeConfig {
  double temperature = kDefaultTemperature;
  double top_p = kDefaultTopP;
  std::int64_t max_new_tokens = 32;
  std::string model;
  std::size_t max_words = 3;
};

struct CategorizeInput {
  std::string domain;
  std::string task;
};

struct CategorizeResult {
  std::map<std::string, std::string> category_by_task;
  std::map<std::string, std::int64_t> histogram;
  std::int64_t truncated = 0;
  std::int64_t failed = 0;
  double mean_tasks_per_category = 0.0;
};

// Lowercases and trims quotes and punctuation, then keeps max_words words.
// Returns the normalized text and whether words were dropped.
std::pair<std::string, bool> normalize_category(std::string_view response, std::size_t max_words = 3);

CategorizeResult categorize_tasks(const std::vector<CategorizeInput>& tasks, LlmGateway& gateway,
                                  const CategorizeConfig& config = {}, std::size_t workers = 1);

}  // namespace flywheel
