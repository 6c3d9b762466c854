#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/model.hpp"

namespace flywheel {

class KeyMismatch : public std::invalid_argument {
 public:
  KeyMismatch(std::vector<std::string> only_predicted, std::vector<std::string> only_labeled);
  const std::vector<std::string>& only_predicted() const { return only_predicted_; }
  const std::vector<std::string>& only_labeled() const { return only_labeled_; }

 private:
  std::vector<std::string> only_predicted_;
  std::vector<std::string> only_labeled_;
};

// Positive class is "unsafe". Ratios are nullopt when their denominator is 0.
struct SafetyMetrics {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> accuracy, precision, recall;
};

SafetyMetrics safety_metrics_from_counts(std::int64_t tp, std::int64_t fn, std::int64_t fp, std::int64_t tn);
SafetyMetrics safety_metrics(const std::map<std::string, bool>& predicted_unsafe,
                             const std::map<std::string, bool>& label_unsafe);

struct BinAccuracy {
  std::string label;
  std::int64_t n = 0;
  std::int64_t correct = 0;
  std::optional<double> accuracy;
};

struct JudgeAccuracyReport {
  std::int64_t n = 0;
  std::int64_t correct = 0;
  std::optional<double> accuracy;
  std::vector<BinAccuracy> confidence_bins;  // always five
  std::vector<BinAccuracy> rank_quartiles;   // empty without ranks
};

inline constexpr std::size_t kConfidenceBins = 5;

// [0,.25) [.25,.5) [.5,.75) [.75,1) {1}
std::size_t confidence_bin(double confidence);

// Quartile 0 holds the highest rank values. Depends only on the multiset of
// values, so it does not change when inputs are permuted.
std::vector<std::size_t> rank_quartiles(std::span<const double> ranks);

JudgeAccuracyReport judge_accuracy_report(std::span<const JudgeScores> scores, std::span<const bool> labels,
                                          std::optional<std::span<const double>> ranks = std::nullopt);

struct CategorySuccess {
  std::string category;
  std::int64_t n = 0;
  double mean_success = 0.0;
};

// Mean judge success per category, for categories with at least min_n scored
// trajectories, highest first. category_by_task maps task text to category.
std::vector<CategorySuccess> category_success_report(const std::vector<Trajectory>& scored,
                                                     const std::map<std::string, std::string>& category_by_task,
                                                     std::int64_t min_n = 100);

// Fraction of true labels; nullopt on empty input.
std::optional<double> verifiable_rate(std::span<const bool> labels);

// --- rendering -----------------------------------------------------------------

nlohmann::json to_json(const SafetyMetrics& m);
nlohmann::json to_json(const JudgeAccuracyReport& r);
nlohmann::json to_json(const std::vector<CategorySuccess>& r);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table to_table(const SafetyMetrics& m);
Table to_table(const JudgeAccuracyReport& r);
Table to_table(const std::vector<CategorySuccess>& r);

// Space-padded columns, one line per row.
std::string render_text(const Table& t);
// RFC 4180 quoting.
std::string render_csv(const Table& t);

}  // namespace flywheel
