// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "flywheel/action_codec.hpp"
#include "flywheel/context.hpp"
#include "flywheel/curation.hpp"
#include "flywheel/evals.hpp"
#include "flywheel/ingest.hpp"
#include "flywheel/jsonl.hpp"
#include "flywheel/judge.hpp"
#include "flywheel/prompts.hpp"
#include "flywheel/proposer.hpp"
#include "flywheel/rollout.hpp"
#include "flywheel/stages.hpp"
#include "flywheel/util.hpp"
#include "../test_support.hpp"

namespace fs = std::filesystem;
using namespace flywheel;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// A check returns an empty string on success, otherwise the reason.
using Check = std::function<std::string()>;

std::string fenced(const std::string& body) { return "```json\n" + body + "\n```"; }

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::unique_ptr<ReplayDriver> looping_site() {
  ReplayDriver::Snapshot s;
  s.dom.url = "https://a.com/";
  s.dom.html = testing::links_page("Home", 3);
  s.elements = {0, 1, 2};
  return std::make_unique<ReplayDriver>(std::vector<ReplayDriver::Snapshot>{s}, true);
}

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

// --- 1 ---------------------------------------------------------------------------

std::string action_examples_and_fuzz() {
  const std::string prompt(prompts::agent_system());
  std::vector<Action> parsed;
  std::size_t from = 0;
  while ((from = prompt.find("```json\n", from)) != std::string::npos) {
    const auto end = prompt.find("\n```", from + 8);
    if (end == std::string::npos) return "unclosed block in agent prompt";
    const auto block = prompt.substr(from, end + 4 - from);
    from = end + 4;
    if (block.find("\"action_key\": str") != std::string::npos) continue;
    try {
      parsed.push_back(parse_action(block));
    } catch (const std::exception& e) {
      return std::string("example failed to parse: ") + e.what();
    }
  }
  const std::vector<Action> expected{
      Action::click(5),         Action::hover(2),
      Action::scroll(0, 300),   Action::fill(13, "John Doe"),
      Action::fill(71, "20"),   Action::select_option(67, "red"),
      Action::set_checked(21, true), Action::go_back(),
      Action::go_to("https://www.duckduckgo.com"), Action::stop("The desired task is now complete."),
  };
  if (parsed != expected) return "parsed " + std::to_string(parsed.size()) + " examples; expected actions differ";

  // Half uniform random bytes, half mutations of valid responses.
  std::mt19937_64 rng(20240101);
  std::vector<std::string> seeds;
  for (const auto& a : expected) seeds.push_back("Reason.\n\n" + fenced(json(a).dump(2)));
  std::int64_t errors = 0, parsed_ok = 0;
  const auto start = Clock::now();
  for (int i = 0; i < 100000; ++i) {
    std::string s;
    if (i % 2 == 0) {
      s.resize(rng() % 256);
      for (auto& ch : s) ch = static_cast<char>(rng() & 0xff);
    } else {
      s = seeds[rng() % seeds.size()];
      const int edits = 1 + static_cast<int>(rng() % 4);
      for (int e = 0; e < edits && !s.empty(); ++e) {
        const auto pos = rng() % s.size();
        switch (rng() % 3) {
          case 0: s[pos] = static_cast<char>(rng() & 0xff); break;
          case 1: s.erase(pos, 1); break;
          default: s.insert(pos, 1, static_cast<char>(rng() & 0xff));
        }
      }
    }
    try {
      parse_action(s);
      ++parsed_ok;
    } catch (const ActionParseError&) {
      ++errors;
    } catch (const std::exception& e) {
      return std::string("fuzz input raised a non-parse error: ") + e.what();
    }
  }
  const double elapsed = seconds_since(start);
  if (errors == 0) return "fuzz produced no parse errors";
  if (elapsed >= 10.0) return "fuzz took " + std::to_string(elapsed) + " s";
  std::cout << "  fuzz: 100000 inputs, " << errors << " errors, " << parsed_ok << " parsed, " << elapsed << " s\n";
  return "";
}

// --- 2 ---------------------------------------------------------------------------

std::string first_block_rule() {
  const std::vector<Action> a{Action::click(1),  Action::hover(2),        Action::scroll(0, -200), Action::fill(3, "x"),
                              Action::go_back(), Action::go_to("https://b.com/"), Action::stop("42"),
                              Action::select_option(4, "L"), Action::set_checked(5, false), Action::click(0)};
  const std::vector<std::string> broken{"{not json}",
                                        "[1]",
                                        R"({"action_key": "type", "action_kwargs": {}})",
                                        R"({"action_kwargs": {}})",
                                        R"({"action_key": "click", "action_kwargs": {}})",
                                        R"({"action_key": "click", "action_kwargs": {}, "target_element_id": -1})",
                                        R"({"action_key": "fill", "action_kwargs": {"value": 3}, "target_element_id": 1})",
                                        R"({"action_key": "stop", "action_kwargs": {}, "extra": 1})",
                                        "",
                                        R"({"action_key": "scroll", "action_kwargs": {"delta_x": "a", "delta_y": 0}})"};
  int n = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    // Valid first block, different valid second block: the first wins.
    const auto second = a[(i + 1) % a.size()];
    const auto r = "Plan.\n" + fenced(json(a[i]).dump()) + "\nOr maybe:\n" + fenced(json(second).dump());
    try {
      if (parse_action(r) != a[i]) return "case " + std::to_string(n) + ": second block was used";
    } catch (const std::exception& e) {
      return "case " + std::to_string(n) + ": " + e.what();
    }
    ++n;
    // Invalid first block, valid second block: still an error.
    const auto bad = "Plan.\n" + fenced(broken[i]) + "\nFixed:\n" + fenced(json(a[i]).dump());
    try {
      parse_action(bad);
      return "case " + std::to_string(n) + ": fell through to the second block";
    } catch (const ActionParseError&) {
    }
    ++n;
  }
  return n == 20 ? "" : "ran " + std::to_string(n) + " cases";
}

// --- 3 ---------------------------------------------------------------------------

std::string retry_contract() {
  const std::string malformed = "Thinking.\n\n" + fenced("{\"action_key\": \"click\",");
  {
    testing::MockGateway gw(json::array({malformed, testing::action_response(Action::click(1)),
                                         testing::action_response(Action::stop("done"))}));
    auto d = looping_site();
    const auto t = run_episode(testing::site("a.com"), "task", *d, *gw);
    if (t.steps.empty() || t.steps[0].parse_retries != 1) return "malformed->valid did not record parse_retries=1";
    if (t.termination != Termination::stopped || t.steps.size() != 2)
      return "malformed->valid did not continue (" + std::string(to_string(t.termination)) + ", " +
             std::to_string(t.steps.size()) + " steps)";
  }
  {
    testing::MockGateway gw(json::array({malformed, malformed, testing::action_response(Action::stop("x"))}));
    auto d = looping_site();
    const auto t = run_episode(testing::site("a.com"), "task", *d, *gw);
    if (t.termination != Termination::parse_error)
      return "malformed->malformed ended with " + std::string(to_string(t.termination));
    if (gw.backend->request_count() != 2) return "malformed->malformed made extra requests";
  }
  return "";
}

// --- 4 ---------------------------------------------------------------------------

std::string action_caps() {
  {
    testing::MockGateway gw(json::array({testing::action_response(Action::click(0))}));
    auto d = looping_site();
    const auto t = run_episode(testing::site("a.com"), "task", *d, *gw);
    if (t.steps.size() != 30 || t.termination != Termination::action_cap)
      return "never-stopping policy: " + std::to_string(t.steps.size()) + " steps, " +
             std::string(to_string(t.termination));
  }
  for (int k : {1, 2, 7, 15, 29, 30}) {
    json script = json::array();
    for (int i = 1; i < k; ++i) script.push_back(testing::action_response(Action::click(0)));
    script.push_back(testing::action_response(Action::stop("ok")));
    testing::MockGateway gw(json{{"rules", {{{"when_all", json::array()}, {"responses", script}, {"after", "error"}}}}});
    auto d = looping_site();
    const auto t = run_episode(testing::site("a.com"), "task", *d, *gw);
    if (static_cast<int>(t.steps.size()) != k || t.termination != Termination::stopped)
      return "stop at " + std::to_string(k) + " gave " + std::to_string(t.steps.size()) + " steps, " +
             std::string(to_string(t.termination));
  }
  return "";
}

// --- 5 ---------------------------------------------------------------------------

std::string prompt_windows() {
  for (int t = 1; t <= 12; ++t) {
    const auto traj = testing::trajectory("a.com", t);
    const auto want = static_cast<std::size_t>(std::min(5, t));
    const auto agent = build_agent_prompt(traj.task, std::span<const Step>(traj.steps.data(), t - 1), t - 1,
                                          traj.steps.back().observation);
    const auto judge = build_judge_request(traj, {}).messages.back().content;
    const auto proposer = build_refine_request(traj, {}).messages.back().content;
    const std::pair<const char*, std::size_t> got[] = {{"agent", count_observation_blocks(agent)},
                                                       {"judge", count_observation_blocks(judge)},
                                                       {"proposer", count_observation_blocks(proposer)}};
    for (const auto& [who, n] : got)
      if (n != want)
        return std::string(who) + " prompt at t=" + std::to_string(t) + " holds " + std::to_string(n) + " blocks";
  }
  return "";
}

// --- 6 ---------------------------------------------------------------------------

std::string judge_math() {
  const double success[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  const double confidence[] = {1.0, 0.5, 0.0, 0.5, 1.0};
  const bool binary[] = {false, false, false, true, true};
  for (int i = 0; i < 5; ++i) {
    const auto response = "Reason.\n\n" + fenced(json{{"success", success[i]}, {"efficiency", 0.5}, {"self_correction", 0.5}}.dump());
    const auto s = parse_judge_response(response);
    if (std::abs(s.confidence - confidence[i]) > 1e-12 || s.success_binary != binary[i])
      return "success " + std::to_string(success[i]) + " gave confidence " + std::to_string(s.confidence);
  }
  return "";
}

// --- 7 ---------------------------------------------------------------------------

std::string filter_and_bookkeeping() {
  std::vector<Trajectory> all;
  std::vector<std::string> perfect;
  std::mt19937 rng(3);
  const double others[] = {0.0, 0.25, 0.5, 0.75};
  std::vector<int> slots(20);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);
  std::set<int> nine(slots.begin(), slots.begin() + 9);
  for (int i = 0; i < 20; ++i) {
    const auto host = "s" + std::to_string(i) + ".com";
    const double s = nine.contains(i) ? 1.0 : others[i % 4];
    if (s == 1.0) perfect.push_back(host);
    all.push_back(testing::scored(testing::trajectory(host, 2), s));
  }
  std::vector<std::string> kept;
  for (const auto& t : filter_success(all)) kept.push_back(t.site.host);
  if (kept != perfect) return "filter kept " + std::to_string(kept.size()) + " trajectories, not the nine perfect ones";

  // 10.5k of 20k judged successful is 52.5%.
  const auto base = testing::trajectory("b.com", 1);
  std::vector<Trajectory> many;
  many.reserve(20000);
  for (int i = 0; i < 20000; ++i) many.push_back(testing::scored(base, i < 10500 ? 1.0 : 0.0));
  const auto stats = dataset_stats(many);
  const auto p = partition_success(many);
  const double kept_fraction = static_cast<double>(p.kept.size()) / static_cast<double>(many.size());
  if (p.kept.size() != 10500 || std::abs(kept_fraction - 0.525) > 1e-12 || std::abs(stats.success_rate - 0.525) > 1e-12)
    return "bookkeeping gave " + std::to_string(p.kept.size()) + " kept, rate " + std::to_string(stats.success_rate);
  return "";
}

// --- 8 ---------------------------------------------------------------------------

std::string safety_numbers() {
  const auto m = safety_metrics_from_counts(50, 0, 15, 35);
  if (!m.accuracy || std::abs(*m.accuracy - 0.85) > 1e-12) return "accuracy";
  if (!m.precision || std::abs(*m.precision - 0.769) > 0.001) return "precision " + std::to_string(*m.precision);
  if (!m.recall || *m.recall != 1.0) return "recall";
  return "";
}

// --- 9 ---------------------------------------------------------------------------

std::string run_token_estimate() {
  RunShape shape;
  shape.tasks = 146746;
  shape.avg_observation_tokens = 1024;
  shape.window = 5;
  shape.avg_response_tokens = 512;
  shape.system_tokens = 1024;
  shape.avg_steps = 15;
  const auto e = estimate_run_tokens(shape);
  std::cout << "  agent " << e.agent / 1e9 << "B, judge " << e.judge / 1e9 << "B\n";
  if (std::abs(e.agent / 14.65e9 - 1.0) > 0.10) return "agent estimate " + std::to_string(e.agent);
  if (std::abs(e.judge / 1.35e9 - 1.0) > 0.10) return "judge estimate " + std::to_string(e.judge);
  return "";
}

// --- 10 --------------------------------------------------------------------------

std::string ingest_top_k() {
  const auto path = testing::fixture("ingest/ranks_1000.txt.gz");
  TopKSelector top(100);
  std::vector<SiteRecord> all;
  const auto stats = parse_rank_file(path, ColumnMap::common_crawl(), [&](SiteRecord&& r) {
    all.push_back(r);
    top.push(std::move(r));
  });
  if (stats.lines != 1000) return "read " + std::to_string(stats.lines) + " lines";
  const auto got = top.result();

  // Oracle 1: the checked-in full sort.
  const auto want = read_tsv(testing::fixture("ingest/expected_top100.tsv"));
  if (got.size() != want.size()) return "selected " + std::to_string(got.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    if (got[i].host != want[i].at(2) || got[i].rank_value != std::stod(want[i].at(1)) ||
        got[i].rank_position != std::stoll(want[i].at(0)))
      return "row " + std::to_string(i) + " is " + got[i].host + ", expected " + want[i].at(2);

  // Oracle 2: best record per host, then a full stable sort of everything.
  std::map<std::string, SiteRecord> best;
  for (const auto& r : all) {
    auto it = best.find(r.host);
    if (it == best.end() || r.rank_value > it->second.rank_value) best[r.host] = r;
  }
  std::vector<SiteRecord> sorted;
  for (auto& [_, r] : best) sorted.push_back(r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const SiteRecord& a, const SiteRecord& b) {
    return a.rank_value != b.rank_value ? a.rank_value > b.rank_value : a.host < b.host;
  });
  for (std::size_t i = 0; i < got.size(); ++i)
    if (got[i].host != sorted[i].host) return "in-process oracle disagrees at row " + std::to_string(i);

  const auto hosts = read_tsv(testing::fixture("ingest/reversed_hosts.tsv"));
  if (hosts.size() != 50) return "expected 50 reversed hosts";
  for (const auto& h : hosts)
    if (unreverse_host(h.at(0)) != h.at(1)) return h.at(0) + " unreversed to " + unreverse_host(h.at(0));
  return "";
}

// --- 11 --------------------------------------------------------------------------

template <typename T>
std::string validate_file(const fs::path& p, std::size_t* count = nullptr) {
  JsonlReadResult r;
  std::vector<T> records;
  try {
    records = load_jsonl<T>(p.string(), &r);
  } catch (const std::exception& e) {
    return p.filename().string() + ": " + e.what();
  }
  if (!r.errors.empty()) return p.filename().string() + ": " + r.errors.front();
  for (const auto& rec : records) {
    try {
      validate(rec);
    } catch (const std::exception& e) {
      return p.filename().string() + ": " + e.what();
    }
  }
  if (count) *count = records.size();
  return "";
}

std::string end_to_end() {
  const std::string cli = std::string("'") + FLYWHEEL_CLI + "'";
  const auto flags = " --config '" + testing::fixture("e2e/config.toml") + "' --mock-llm '" +
                     testing::fixture("e2e/mock_llm.json") + "' --driver 'replay:" + testing::fixture("e2e/replay") +
                     "' -q --in '" + testing::fixture("e2e/ranks.txt") + "'";
  std::vector<fs::path> dirs{testing::scratch_dir("acceptance-e2e-1"), testing::scratch_dir("acceptance-e2e-2")};
  for (const auto& d : dirs) {
    const auto start = Clock::now();
    const int rc = testing::run_command(cli + " run-all" + flags + " --workdir '" + d.string() + "' 2>&1");
    const double elapsed = seconds_since(start);
    if (rc != 0) return "run-all exited " + std::to_string(rc);
    if (elapsed >= 60.0) return "run-all took " + std::to_string(elapsed) + " s";
    std::cout << "  run-all: " << elapsed << " s\n";
  }
  const auto p = run_all_paths(dirs[0].string());
  for (const std::string& f : {p.sites, p.tasks, p.explore, p.refined, p.trajectories, p.scored, p.kept, p.sft,
                        p.sft + ".index.json"}) {
    const auto name = fs::path(f).filename();
    if (!fs::exists(dirs[0] / name)) return name.string() + " missing";
    if (read_file((dirs[0] / name).string()) != read_file((dirs[1] / name).string()))
      return name.string() + " differs between runs";
  }

  std::size_t scored_n = 0, sft_n = 0;
  for (const std::string& err : {validate_file<SiteRecord>(p.sites), validate_file<SiteRecord>(p.tasks),
                          validate_file<SiteRecord>(p.refined), validate_file<Trajectory>(p.explore),
                          validate_file<Trajectory>(p.trajectories), validate_file<Trajectory>(p.scored, &scored_n),
                          validate_file<Trajectory>(p.kept), validate_file<SftRecord>(p.sft, &sft_n)})
    if (!err.empty()) return "schema: " + err;
  if (scored_n == 0 || sft_n == 0) return "empty outputs";

  std::string stats_text;
  if (testing::run_command(cli + " stats -q --in '" + p.scored + "' --out '" + (dirs[0] / "stats.json").string() + "'",
                           &stats_text) != 0)
    return "stats failed";
  const auto stats = json::parse(read_file((dirs[0] / "stats.json").string()));
  std::int64_t steps = 0, judged = 0;
  for (const auto& t : load_jsonl<Trajectory>(p.scored)) {
    steps += static_cast<std::int64_t>(t.steps.size());
    judged += t.judge.has_value();
  }
  if (stats.at("action_traces") != steps) return "action traces != total steps";
  if (stats.at("judge_traces") != judged || judged != static_cast<std::int64_t>(scored_n))
    return "judge traces != scored trajectories";
  return "";
}

// --- 12 --------------------------------------------------------------------------

std::string html_goldens() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(testing::fixture("html")))
    if (e.path().extension() == ".html") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() != 15) return std::to_string(files.size()) + " fixtures";
  static const std::regex marker(R"(\[id: (\d+)\])");
  for (const auto& html : files) {
    auto golden = html;
    golden.replace_extension(".md");
    if (!fs::exists(golden)) return golden.filename().string() + " missing";
    const auto obs = encode(DomSnapshot{"https://fixture.test/" + html.filename().string(), read_file(html.string()), {}, {}});
    if (obs.markdown + "\n" != read_file(golden.string())) return html.filename().string() + " differs from golden";
    std::size_t markers = 0;
    for (std::sregex_iterator it(obs.markdown.begin(), obs.markdown.end(), marker), end; it != end; ++it, ++markers)
      if (!obs.elements.contains(std::stoll((*it)[1]))) return html.filename().string() + ": dangling " + it->str();
    if (markers != obs.elements.size()) return html.filename().string() + ": element without marker";
    if (obs.token_count > kDefaultObservationBudget) return html.filename().string() + " over budget";
  }
  for (const char* name : {"14_oversized_article.html", "15_oversized_catalog.html"}) {
    const auto text = read_file(testing::fixture(std::string("html/") + name));
    EncoderConfig unlimited;
    unlimited.observation_token_budget = 1'000'000;
    const auto full = encode(DomSnapshot{"https://fixture.test/", text, {}, {}}, unlimited);
    const auto cut = encode(DomSnapshot{"https://fixture.test/", text, {}, {}});
    if (full.token_count <= kDefaultObservationBudget) return std::string(name) + " is not oversized";
    if (cut.token_count > kDefaultObservationBudget || !cut.markdown.ends_with(std::string(kTruncationMarker)))
      return std::string(name) + " not truncated to budget";
    const auto kept = cut.markdown.substr(0, cut.markdown.size() - kTruncationMarker.size());
    if (!full.markdown.starts_with(kept)) return std::string(name) + " truncation is not a prefix";
  }
  return "";
}

// --- 13 --------------------------------------------------------------------------

std::string interleave_fraction() {
  InterleaveOptions o;
  o.p_real = 0.8;
  o.seed = 13;
  o.max_draws = 10000;
  o.with_replacement = true;
  const auto r = interleave(1000, 1000, o);
  if (r.draws.size() != 10000) return "drew " + std::to_string(r.draws.size());
  const auto human = std::count_if(r.draws.begin(), r.draws.end(), [](const Draw& d) { return d.source == DataSource::human; });
  const double frac = static_cast<double>(human) / 10000.0;
  std::cout << "  human fraction " << frac << "\n";
  if (std::abs(frac - 0.8) > 0.02) return "human fraction " + std::to_string(frac);
  return "";
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Check>> checks{
      {"action parsing and fuzz", action_examples_and_fuzz},
      {"first-block rule", first_block_rule},
      {"parse retry contract", retry_contract},
      {"action caps", action_caps},
      {"prompt windows", prompt_windows},
      {"judge confidence and binary", judge_math},
      {"success filter and bookkeeping", filter_and_bookkeeping},
      {"safety metrics", safety_numbers},
      {"token estimate", run_token_estimate},
      {"ingest top-k", ingest_top_k},
      {"deterministic end to end", end_to_end},
      {"html goldens and truncation", html_goldens},
      {"interleave fraction", interleave_fraction},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    std::string reason;
    try {
      reason = checks[i].second();
    } catch (const std::exception& e) {
      reason = std::string("exception: ") + e.what();
    }
    if (reason.empty()) {
      std::cout << "PASS " << i + 1 << ": " << checks[i].first << "\n";
    } else {
      ++failed;
      std::cout << "FAIL " << i + 1 << ": " << checks[i].first << " (" << reason << ")\n";
    }
    std::cout.flush();
  }
  return failed ? 1 : 0;
}
