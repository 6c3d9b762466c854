#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "flywheel/ingest.hpp"
#include "flywheel/util.hpp"
#include "test_support.hpp"

namespace flywheel {
namespace {

using testing::fixture;

std::vector<std::vector<std::string>> read_tsv(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    rows.push_back(cols);
  }
  return rows;
}

TEST(Unreverse, Fixtures) {
  const auto rows = read_tsv(fixture("ingest/reversed_hosts.tsv"));
  ASSERT_EQ(rows.size(), 50u);
  for (const auto& r : rows) EXPECT_EQ(unreverse_host(r.at(0)), r.at(1)) << r.at(0);
}

TEST(Unreverse, EdgeCases) {
  EXPECT_EQ(unreverse_host("com.example.www"), "www.example.com");
  EXPECT_EQ(unreverse_host("LOCALHOST"), "localhost");
  EXPECT_EQ(unreverse_host(""), "");
}

TEST(RankFile, TopHundredMatchesFullSort) {
  TopKSelector sel(100);
  const auto stats = parse_rank_file(fixture("ingest/ranks_1000.txt.gz"), ColumnMap::common_crawl(),
                                     [&](SiteRecord&& r) { sel.push(std::move(r)); });
  EXPECT_EQ(stats.lines, 1000);
  EXPECT_EQ(stats.header_lines, 1);
  EXPECT_EQ(stats.records + stats.malformed + stats.header_lines, stats.lines);
  EXPECT_GT(stats.malformed, 0);

  const auto got = sel.result();
  const auto want = read_tsv(fixture("ingest/expected_top100.tsv"));
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].host, want[i].at(2)) << i;
    EXPECT_EQ(got[i].rank_value, std::stod(want[i].at(1))) << i;
    EXPECT_EQ(got[i].rank_position, std::stoll(want[i].at(0))) << i;
  }
}

TEST(RankFile, HeaderMismatchAndMissingFile) {
  const auto dir = testing::scratch_dir("ingest");
  const auto path = (dir / "ranks.txt").string();
  write_file(path, "#a #b #pr_pos #pr_val #host_rev\n1 2 3 0.5 com.x\n");
  EXPECT_NO_THROW(parse_rank_file(path, ColumnMap::common_crawl(), [](SiteRecord&&) {}));
  write_file(path, "#a #b #pr_val #pr_pos #host_rev\n1 2 3 0.5 com.x\n");
  EXPECT_THROW(parse_rank_file(path, ColumnMap::common_crawl(), [](SiteRecord&&) {}), RankFileError);
  EXPECT_THROW(parse_rank_file((dir / "missing.gz").string(), ColumnMap::common_crawl(), [](SiteRecord&&) {}),
               RankFileError);
}

TEST(RankFile, PlainTextAndCustomColumns) {
  const auto dir = testing::scratch_dir("ingest-plain");
  const auto path = (dir / "ranks.txt").string();
  write_file(path, "1 com.b 0.5\n\n2 com.a 0.5\n3 org.c -1\nbad\n4 net.d 0.9\n");
  std::vector<SiteRecord> all;
  const auto stats = parse_rank_file(path, ColumnMap{}, [&](SiteRecord&& r) { all.push_back(std::move(r)); });
  EXPECT_EQ(stats.records, 3);
  EXPECT_EQ(stats.malformed, 2);
  const auto top = select_top_k(all, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].host, "d.net");
  EXPECT_EQ(top[1].host, "a.com");  // tie broken by host
}

TEST(TopK, MatchesSortOracleOnRandomInput) {
  std::mt19937 rng(5);
  for (int round = 0; round < 20; ++round) {
    std::vector<SiteRecord> all;
    std::map<std::string, SiteRecord> best;
    for (int i = 0; i < 500; ++i) {
      SiteRecord r;
      r.host = "h" + std::to_string(rng() % 120) + ".com";
      r.rank_value = static_cast<double>(rng() % 30) / 10.0;
      r.rank_position = i + 1;
      all.push_back(r);
      auto it = best.find(r.host);
      if (it == best.end() || r.rank_value > it->second.rank_value) best[r.host] = r;
    }
    std::vector<SiteRecord> oracle;
    for (auto& [_, r] : best) oracle.push_back(r);
    std::sort(oracle.begin(), oracle.end(), [](const SiteRecord& a, const SiteRecord& b) {
      return a.rank_value != b.rank_value ? a.rank_value > b.rank_value : a.host < b.host;
    });
    const std::size_t k = 1 + rng() % 60;
    oracle.resize(std::min(k, oracle.size()));
    const auto got = select_top_k(all, k);
    ASSERT_EQ(got.size(), oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].host, oracle[i].host);
      EXPECT_EQ(got[i].rank_position, oracle[i].rank_position);
    }
  }
  EXPECT_THROW(TopKSelector(0), std::invalid_argument);
}

TEST(Pii, ScrubsEmailsAndPhones) {
  EXPECT_EQ(scrub_pii("mail jane.doe+x@mail.example.co.uk now", true), "mail {{EMAIL}} now");
  EXPECT_EQ(scrub_pii("call (555) 123-4567 or 555-123-4567", true), "call {{PHONE}} or {{PHONE}}");
  EXPECT_EQ(scrub_pii("intl +44 20 7946 0958.", true), "intl {{PHONE}}.");
  EXPECT_EQ(scrub_pii("price $19.00 on 2024-01-01", true), "price $19.00 on 2024-01-01");
  EXPECT_EQ(scrub_pii("a@b.com", false), "a@b.com");
}

TEST(Pii, ScrubsTrajectoryText) {
  auto t = testing::trajectory("a.com", 2);
  t.final_answer = "Write to help@a.com";
  t.steps[0].reasoning = "Phone is 555-123-4567.";
  t.steps[0].action = Action::fill(0, "me@x.org");
  const auto s = scrub_trajectory(t);
  EXPECT_EQ(*s.final_answer, "Write to {{EMAIL}}");
  EXPECT_EQ(s.steps[0].reasoning, "Phone is {{PHONE}}.");
  EXPECT_EQ(std::get<std::string>(s.steps[0].action->kwargs.at("value")), "{{EMAIL}}");
}

}  // namespace
}  // namespace flywheel
