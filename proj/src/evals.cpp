#include "flywheel/evals.hpp"

#include <algorithm>
#include <cstdio>

namespace flywheel {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

KeyMismatch::KeyMismatch(std::vector<std::string> only_predicted, std::vector<std::string> only_labeled)
    : std::invalid_argument("key sets differ; only predicted: [" + join(only_predicted) + "], only labeled: [" +
                            join(only_labeled) + "]"),
      only_predicted_(std::move(only_predicted)),
      only_labeled_(std::move(only_labeled)) {}

SafetyMetrics safety_metrics_from_counts(std::int64_t tp, std::int64_t fn, std::int64_t fp, std::int64_t tn) {
  if (tp < 0 || fn < 0 || fp < 0 || tn < 0) throw std::invalid_argument("confusion counts must be nonnegative");
  SafetyMetrics m{tp, fp, tn, fn, {}, {}, {}};
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  return m;
}

SafetyMetrics safety_metrics(const std::map<std::string, bool>& predicted, const std::map<std::string, bool>& labels) {
  std::vector<std::string> only_pred, only_label;
  for (const auto& [k, _] : predicted)
    if (!labels.contains(k)) only_pred.push_back(k);
  for (const auto& [k, _] : labels)
    if (!predicted.contains(k)) only_label.push_back(k);
  if (!only_pred.empty() || !only_label.empty()) throw KeyMismatch(only_pred, only_label);
  std::int64_t tp = 0, fn = 0, fp = 0, tn = 0;
  for (const auto& [host, p] : predicted) {
    const bool l = labels.at(host);
    if (p && l) ++tp;
    else if (!p && l) ++fn;
    else if (p && !l) ++fp;
    else ++tn;
  }
  return safety_metrics_from_counts(tp, fn, fp, tn);
}

std::size_t confidence_bin(double c) {
  if (c >= 1.0) return 4;
  if (c >= 0.75) return 3;
  if (c >= 0.5) return 2;
  if (c >= 0.25) return 1;
  return 0;
}

std::vector<std::size_t> rank_quartiles(std::span<const double> ranks) {
  std::vector<double> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<std::size_t> out;
  out.reserve(ranks.size());
  const auto n = ranks.size();
  for (double r : ranks) {
    // Items with equal value share the quartile of the first of them.
    const auto above = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), r, std::greater<>()) -
                                                sorted.begin());
    out.push_back(std::min<std::size_t>(4 * above / n, 3));
  }
  return out;
}

JudgeAccuracyReport judge_accuracy_report(std::span<const JudgeScores> scores, std::span<const bool> labels,
                                          std::optional<std::span<const double>> ranks) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  if (ranks && ranks->size() != scores.size()) throw std::invalid_argument("ranks and scores differ in length");

  JudgeAccuracyReport r;
  static constexpr const char* kConfLabels[kConfidenceBins] = {"[0.00,0.25)", "[0.25,0.50)", "[0.50,0.75)",
                                                               "[0.75,1.00)", "1.00"};
  for (const char* l : kConfLabels) r.confidence_bins.push_back({l, 0, 0, std::nullopt});
  std::vector<std::size_t> quartile;
  if (ranks) {
    quartile = rank_quartiles(*ranks);
    for (const char* l : {"Q1 (top)", "Q2", "Q3", "Q4 (bottom)"}) r.rank_quartiles.push_back({l, 0, 0, std::nullopt});
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool ok = scores[i].success_binary == labels[i];
    ++r.n;
    r.correct += ok;
    auto& bin = r.confidence_bins[confidence_bin(scores[i].confidence)];
    ++bin.n;
    bin.correct += ok;
    if (ranks) {
      auto& q = r.rank_quartiles[quartile[i]];
      ++q.n;
      q.correct += ok;
    }
  }
  r.accuracy = ratio(r.correct, r.n);
  for (auto& b : r.confidence_bins) b.accuracy = ratio(b.correct, b.n);
  for (auto& b : r.rank_quartiles) b.accuracy = ratio(b.correct, b.n);
  return r;
}

std::vector<CategorySuccess> category_success_report(const std::vector<Trajectory>& scored,
                                                     const std::map<std::string, std::string>& category_by_task,
                                                     std::int64_t min_n) {
  std::map<std::string, std::pair<std::int64_t, double>> acc;
  for (const auto& t : scored) {
    if (!t.judge) continue;
    const auto it = category_by_task.find(t.task);
    if (it == category_by_task.end()) throw std::invalid_argument("task is not categorized: " + t.task);
    auto& [n, sum] = acc[it->second];
    ++n;
    sum += t.judge->success;
  }
  std::vector<CategorySuccess> out;
  for (const auto& [cat, v] : acc) {
    if (v.first < min_n) continue;
    out.push_back({cat, v.first, v.second / static_cast<double>(v.first)});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean_success > b.mean_success; });
  return out;
}

std::optional<double> verifiable_rate(std::span<const bool> labels) {
  return ratio(std::count(labels.begin(), labels.end(), true), static_cast<std::int64_t>(labels.size()));
}

// --- rendering -----------------------------------------------------------------

json to_json(const SafetyMetrics& m) {
  return json{{"tp", m.tp},
              {"fp", m.fp},
              {"tn", m.tn},
              {"fn", m.fn},
              {"accuracy", opt_json(m.accuracy)},
              {"precision", opt_json(m.precision)},
              {"recall", opt_json(m.recall)}};
}

namespace {

json bins_json(const std::vector<BinAccuracy>& bins) {
  json a = json::array();
  for (const auto& b : bins)
    a.push_back({{"bin", b.label}, {"n", b.n}, {"correct", b.correct}, {"accuracy", opt_json(b.accuracy)}});
  return a;
}

}  // namespace

json to_json(const JudgeAccuracyReport& r) {
  json j{{"n", r.n},
         {"correct", r.correct},
         {"accuracy", opt_json(r.accuracy)},
         {"confidence_bins", bins_json(r.confidence_bins)}};
  if (!r.rank_quartiles.empty()) j["rank_quartiles"] = bins_json(r.rank_quartiles);
  return j;
}

json to_json(const std::vector<CategorySuccess>& r) {
  json a = json::array();
  for (const auto& c : r) a.push_back({{"category", c.category}, {"n", c.n}, {"mean_success", c.mean_success}});
  return a;
}

Table to_table(const SafetyMetrics& m) {
  return Table{{"tp", "fn", "fp", "tn", "accuracy", "precision", "recall"},
               {{std::to_string(m.tp), std::to_string(m.fn), std::to_string(m.fp), std::to_string(m.tn),
                 fmt(m.accuracy), fmt(m.precision), fmt(m.recall)}}};
}

Table to_table(const JudgeAccuracyReport& r) {
  Table t{{"group", "bin", "n", "correct", "accuracy"}, {}};
  t.rows.push_back({"overall", "all", std::to_string(r.n), std::to_string(r.correct), fmt(r.accuracy)});
  for (const auto& b : r.confidence_bins)
    t.rows.push_back({"confidence", b.label, std::to_string(b.n), std::to_string(b.correct), fmt(b.accuracy)});
  for (const auto& b : r.rank_quartiles)
    t.rows.push_back({"rank", b.label, std::to_string(b.n), std::to_string(b.correct), fmt(b.accuracy)});
  return t;
}

Table to_table(const std::vector<CategorySuccess>& r) {
  Table t{{"category", "n", "mean_success"}, {}};
  for (const auto& c : r) t.rows.push_back({c.category, std::to_string(c.n), fmt(c.mean_success)});
  return t;
}

std::string render_text(const Table& t) {
  std::vector<std::size_t> width(t.header.size(), 0);
  auto measure = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], row[i].size());
  };
  measure(t.header);
  for (const auto& row : t.rows) measure(row);
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += "  ";
      line += row[i];
      if (i + 1 < row.size()) line.append(width[i] - row[i].size(), ' ');
    }
    out += line + "\n";
  };
  emit(t.header);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& row : t.rows) emit(row);
  return out;
}

std::string render_csv(const Table& t) {
  auto cell = [](const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + cell(row[i]);
    out += "\r\n";
  };
  emit(t.header);
  for (const auto& row : t.rows) emit(row);
  return out;
}

}  // namespace flywheel
