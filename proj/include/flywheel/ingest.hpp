#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "flywheel/model.hpp"

namespace flywheel {

class RankFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero-based column indexes. When expected_header is set and the file has a
// header line, the named columns must sit at these indexes (names compared
// without the leading '#').
struct ColumnMap {
  std::size_t position = 0;
  std::size_t host = 1;
  std::size_t value = 2;
  std::optional<std::array<std::string, 3>> expected_header;  // position, value, host

  // Layout of the Common Crawl host-rank exports:
  //   #harmonicc_pos #harmonicc_val #pr_pos #pr_val #host_rev
  // selecting the PageRank columns.
  static ColumnMap common_crawl();
};

struct RankParseStats {
  std::int64_t lines = 0;
  std::int64_t records = 0;
  std::int64_t header_lines = 0;
  std::int64_t malformed = 0;
};

// "com.example.www" -> "www.example.com", lowercased.
std::string unreverse_host(std::string_view reversed);

// Streams a gzip or plain-text rank file, calling sink per record. Throws
// RankFileError when the file cannot be read or the header contradicts the
// column map; bad lines are counted and skipped.
RankParseStats parse_rank_file(const std::string& path, const ColumnMap& columns,
                               const std::function<void(SiteRecord&&)>& sink);

// Keeps the k best records seen so far: highest rank_value, ties to the
// lexicographically smaller host, one record per host. Memory is O(k).
class TopKSelector {
 public:
  explicit TopKSelector(std::size_t k);
  void push(SiteRecord record);
  // Best first.
  std::vector<SiteRecord> result() const;

 private:
  struct Better {
    bool operator()(const SiteRecord& a, const SiteRecord& b) const {
      if (a.rank_value != b.rank_value) return a.rank_value > b.rank_value;
      return a.host < b.host;
    }
  };
  std::size_t k_;
  std::set<SiteRecord, Better> best_;
  std::unordered_map<std::string, std::set<SiteRecord, Better>::iterator> by_host_;
};

std::vector<SiteRecord> select_top_k(const std::vector<SiteRecord>& records, std::size_t k);

// --- PII -----------------------------------------------------------------------

class PiiScrubber {
 public:
  virtual ~PiiScrubber() = default;
  virtual std::string scrub(std::string_view text) const = 0;
};

// Replaces email addresses with {{EMAIL}} and phone numbers with {{PHONE}}.
// Phones match the "+" international form or common US layouts.
class RegexPiiScrubber final : public PiiScrubber {
 public:
  std::string scrub(std::string_view text) const override;
};

const PiiScrubber& default_pii_scrubber();

// Identity when disabled.
std::string scrub_pii(std::string_view text, bool enabled, const PiiScrubber& scrubber = default_pii_scrubber());

// Scrubs every free-text field of a trajectory, page text included.
Trajectory scrub_trajectory(const Trajectory& t, const PiiScrubber& scrubber = default_pii_scrubber());

}  // namespace flywheel
