#include "flywheel/ingest.hpp"

#include <charconv>
#include <cmath>
#include <regex>

#include <zlib.h>

#include "flywheel/util.hpp"

namespace flywheel {

ColumnMap ColumnMap::common_crawl() {
  ColumnMap m;
  m.position = 2;
  m.value = 3;
  m.host = 4;
  m.expected_header = std::array<std::string, 3>{"pr_pos", "pr_val", "host_rev"};
  return m;
}

std::string unreverse_host(std::string_view reversed) {
  auto labels = std::vector<std::string_view>{};
  std::size_t begin = 0;
  while (begin <= reversed.size()) {
    const auto dot = reversed.find('.', begin);
    const auto end = dot == std::string_view::npos ? reversed.size() : dot;
    if (end > begin) labels.push_back(reversed.substr(begin, end - begin));
    if (dot == std::string_view::npos) break;
    begin = dot + 1;
  }
  std::string host;
  for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
    if (!host.empty()) host += '.';
    host += *it;
  }
  return to_lower(host);
}

namespace {

class GzLineReader {
 public:
  explicit GzLineReader(const std::string& path) : file_(gzopen(path.c_str(), "rb")) {
    if (!file_) throw RankFileError("cannot open rank file " + path);
    gzbuffer(file_, 1 << 16);
  }
  ~GzLineReader() {
    if (file_) gzclose(file_);
  }
  GzLineReader(const GzLineReader&) = delete;
  GzLineReader& operator=(const GzLineReader&) = delete;

  bool next(std::string& line) {
    line.clear();
    char buf[4096];
    while (gzgets(file_, buf, sizeof buf)) {
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
    }
    int err = Z_OK;
    const char* msg = gzerror(file_, &err);
    if (err != Z_OK && err != Z_STREAM_END) throw RankFileError(std::string("read error: ") + msg);
    return !line.empty();
  }

 private:
  gzFile file_;
};

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for doubles does not accept a leading '+', neither do we.
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
  }
}

std::string strip_hash(std::string s) {
  while (!s.empty() && s.front() == '#') s.erase(0, 1);
  return s;
}

}  // namespace

RankParseStats parse_rank_file(const std::string& path, const ColumnMap& columns,
                               const std::function<void(SiteRecord&&)>& sink) {
  GzLineReader reader(path);
  RankParseStats stats;
  const auto needed = std::max({columns.position, columns.host, columns.value}) + 1;
  std::string line;
  while (reader.next(line)) {
    ++stats.lines;
    const auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.front().starts_with("#")) {
      ++stats.header_lines;
      if (columns.expected_header && fields.size() >= needed) {
        const auto& want = *columns.expected_header;
        const std::array<std::size_t, 3> at{columns.position, columns.value, columns.host};
        for (std::size_t i = 0; i < 3; ++i) {
          if (strip_hash(fields[at[i]]) != want[i])
            throw RankFileError(path + ": header column " + std::to_string(at[i]) + " is '" + fields[at[i]] +
                                "', expected '" + want[i] + "'");
        }
      }
      continue;
    }
    SiteRecord r;
    if (fields.size() < needed || !parse_number(fields[columns.position], r.rank_position) ||
        !parse_number(fields[columns.value], r.rank_value) || r.rank_position < 1 || r.rank_value < 0) {
      ++stats.malformed;
      continue;
    }
    r.host = unreverse_host(fields[columns.host]);
    if (r.host.empty() || r.host.find("://") != std::string::npos) {
      ++stats.malformed;
      continue;
    }
    ++stats.records;
    sink(std::move(r));
  }
  return stats;
}

TopKSelector::TopKSelector(std::size_t k) : k_(k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
}

void TopKSelector::push(SiteRecord record) {
  if (auto it = by_host_.find(record.host); it != by_host_.end()) {
    if (record.rank_value <= it->second->rank_value) return;
    best_.erase(it->second);
    by_host_.erase(it);
  }
  if (best_.size() == k_ && !Better{}(record, *std::prev(best_.end()))) return;
  const auto host = record.host;
  auto [pos, _] = best_.insert(std::move(record));
  by_host_[host] = pos;
  if (best_.size() > k_) {
    auto worst = std::prev(best_.end());
    by_host_.erase(worst->host);
    best_.erase(worst);
  }
}

std::vector<SiteRecord> TopKSelector::result() const { return {best_.begin(), best_.end()}; }

std::vector<SiteRecord> select_top_k(const std::vector<SiteRecord>& records, std::size_t k) {
  TopKSelector sel(k);
  for (const auto& r : records) sel.push(r);
  return sel.result();
}

// --- PII -----------------------------------------------------------------------

std::string RegexPiiScrubber::scrub(std::string_view text) const {
  static const std::regex email(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,})");
  static const std::regex phone(
      R"(\+\d{1,3}[\s.-]?(\(\d{1,4}\)[\s.-]?)?\d{1,4}([\s.-]?\d{2,4}){1,4})"
      R"(|\(\d{3}\)\s?\d{3}[\s.-]\d{4}\b)"
      R"(|\b\d{3}[.-]\d{3}[.-]\d{4}\b)");
  auto out = std::regex_replace(std::string(text), email, "{{EMAIL}}");
  return std::regex_replace(out, phone, "{{PHONE}}");
}

const PiiScrubber& default_pii_scrubber() {
  static const RegexPiiScrubber s;
  return s;
}

std::string scrub_pii(std::string_view text, bool enabled, const PiiScrubber& scrubber) {
  return enabled ? scrubber.scrub(text) : std::string(text);
}

Trajectory scrub_trajectory(const Trajectory& t, const PiiScrubber& s) {
  Trajectory out = t;
  out.task = s.scrub(out.task);
  if (out.final_answer) out.final_answer = s.scrub(*out.final_answer);
  if (out.judge) out.judge->judge_reasoning = s.scrub(out.judge->judge_reasoning);
  for (auto& step : out.steps) {
    step.reasoning = s.scrub(step.reasoning);
    step.raw_response = s.scrub(step.raw_response);
    step.observation.markdown = s.scrub(step.observation.markdown);
    for (auto& [_, e] : step.observation.elements) {
      e.label = s.scrub(e.label);
      if (e.current_value) e.current_value = s.scrub(*e.current_value);
    }
    if (step.action) {
      for (auto& [_, v] : step.action->kwargs)
        if (auto* text = std::get_if<std::string>(&v)) *text = s.scrub(*text);
    }
  }
  return out;
}

}  // namespace flywheel
