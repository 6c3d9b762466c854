#include "flywheel/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <variant>
#include <vector>

#include <toml.hpp>

#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace {

using Slot = std::variant<std::int64_t*, std::uint64_t*, double*, bool*, std::string*, std::optional<std::int64_t>*>;

struct Field {
  std::string section;  // empty for top level
  std::string key;
  Slot slot;
  bool secret = false;
};

std::vector<Field> fields(PipelineConfig& c) {
  auto& l = c.limits;
  auto& m = c.llm;
  return {
      {"", "seed", &c.seed},
      {"limits", "observation_token_budget", &l.observation_token_budget},
      {"limits", "agent_trace_tokens", &l.agent_trace_tokens},
      {"limits", "judge_trace_tokens", &l.judge_trace_tokens},
      {"limits", "proposer_trace_tokens", &l.proposer_trace_tokens},
      {"limits", "agent_window", &l.agent_window},
      {"limits", "judge_window", &l.judge_window},
      {"limits", "proposer_window", &l.proposer_window},
      {"limits", "feedback_loops", &l.feedback_loops},
      {"limits", "temperature", &l.temperature},
      {"limits", "top_p", &l.top_p},
      {"limits", "top_k", &l.top_k},
      {"limits", "p_real", &l.p_real},
      {"limits", "max_actions", &l.max_actions},
      {"limits", "in_context_examples", &l.in_context_examples},
      {"limits", "max_sequence_tokens", &l.max_sequence_tokens},
      {"limits", "parse_retry_limit", &l.parse_retry_limit},
      {"llm", "base_url", &m.base_url},
      {"llm", "api_key", &m.api_key, true},
      {"llm", "model", &m.model},
      {"llm", "timeout_s", &m.timeout_s},
      {"llm", "max_attempts", &m.max_attempts},
      {"llm", "backoff_base_ms", &m.backoff_base_ms},
      {"llm", "backoff_factor", &m.backoff_factor},
      {"llm", "max_in_flight", &m.max_in_flight},
      {"llm", "token_cap", &m.token_cap},
      {"llm", "images", &m.images},
      {"workers", "llm", &c.workers.llm},
      {"workers", "browser", &c.workers.browser},
      {"browser", "bridge_url", &c.browser.bridge_url},
      {"browser", "timeout_s", &c.browser.timeout_s},
      {"browser", "screenshots", &c.browser.screenshots},
      {"browser", "screenshot_dir", &c.browser.screenshot_dir},
      {"ingest", "top_k", &c.ingest.top_k},
      {"ingest", "position_column", &c.ingest.position_column},
      {"ingest", "value_column", &c.ingest.value_column},
      {"ingest", "host_column", &c.ingest.host_column},
      {"ingest", "check_header", &c.ingest.check_header},
      {"export", "test_percent", &c.export_.test_percent},
      {"export", "scrub_pii", &c.export_.scrub_pii},
      {"evals", "min_category_n", &c.evals.min_category_n},
  };
}

std::string dotted(const Field& f) { return f.section.empty() ? f.key : f.section + "." + f.key; }

std::string env_name(const Field& f) {
  std::string name = "INSTA_";
  for (char ch : f.section.empty() ? f.key : f.section + "_" + f.key)
    name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

void set_from_toml(const Field& f, const toml::node& node) {
  auto fail = [&](const char* want) { throw ConfigError(dotted(f) + ": expected " + std::string(want)); };
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          if (auto v = node.value<double>()) *p = *v;  // integers convert too
          else fail("a number");
        } else if constexpr (std::is_same_v<T, bool>) {
          if (!node.is_boolean()) fail("a boolean");
          *p = *node.value<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (!node.is_string()) fail("a string");
          *p = *node.value<std::string>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (!node.is_integer() || *node.value<std::int64_t>() < 0) fail("a nonnegative integer");
          *p = static_cast<std::uint64_t>(*node.value<std::int64_t>());
        } else if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) {
          if (node.is_string() && *node.value<std::string>() == "default") p->reset();
          else if (node.is_integer()) *p = *node.value<std::int64_t>();
          else fail("an integer or \"default\"");
        } else {
          if (!node.is_integer()) fail("an integer");
          *p = *node.value<std::int64_t>();
        }
      },
      f.slot);
}

void set_from_text(const Field& f, const std::string& text, const std::string& source) {
  auto fail = [&](const char* want) { throw ConfigError(source + ": expected " + std::string(want) + ", got '" + text + "'"); };
  auto as_int = [&]() -> std::int64_t {
    std::size_t used = 0;
    try {
      const auto v = std::stoll(text, &used);
      if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    fail("an integer");
    return 0;
  };
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          std::size_t used = 0;
          try {
            *p = std::stod(text, &used);
          } catch (const std::exception&) {
            fail("a number");
          }
          if (used != text.size()) fail("a number");
        } else if constexpr (std::is_same_v<T, bool>) {
          const auto t = to_lower(text);
          if (t == "1" || t == "true" || t == "yes") *p = true;
          else if (t == "0" || t == "false" || t == "no") *p = false;
          else fail("a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = text;
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          std::size_t used = 0;
          try {
            *p = std::stoull(text, &used);
          } catch (const std::exception&) {
            fail("a nonnegative integer");
          }
          if (used != text.size()) fail("a nonnegative integer");
        } else if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) {
          if (to_lower(text) == "default") p->reset();
          else *p = as_int();
        } else {
          *p = as_int();
        }
      },
      f.slot);
}

}  // namespace

PipelineConfig parse_config(std::string_view toml_text, const EnvLookup& env) {
  PipelineConfig c;
  auto table = fields(c);

  toml::table doc;
  try {
    doc = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("config: ") + std::string(e.description()));
  }

  std::set<std::string> known_sections;
  for (const auto& f : table) known_sections.insert(f.section);
  for (const auto& [k, node] : doc) {
    const std::string key(k.str());
    if (node.is_table()) {
      if (!known_sections.contains(key)) throw ConfigError("unknown config section [" + key + "]");
      for (const auto& [k2, child] : *node.as_table()) {
        const std::string sub(k2.str());
        auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.section == key && f.key == sub; });
        if (it == table.end()) throw ConfigError("unknown config key " + key + "." + sub);
        set_from_toml(*it, child);
      }
    } else {
      auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.section.empty() && f.key == key; });
      if (it == table.end()) throw ConfigError("unknown config key " + key);
      set_from_toml(*it, node);
    }
  }

  for (const auto& f : table) {
    const auto name = env_name(f);
    if (auto v = env(name)) set_from_text(f, *v, name);
  }
  if (auto v = env("INSTA_BRIDGE_URL")) c.browser.bridge_url = *v;

  validate(c);
  return c;
}

PipelineConfig load_config(const std::optional<std::string>& path, const EnvLookup& env) {
  if (!path) return parse_config("", env);
  std::string text;
  try {
    text = read_file(*path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, env);
}

void validate(const PipelineConfig& c) {
  const auto& l = c.limits;
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(l.observation_token_budget >= 64, "limits.observation_token_budget must be >= 64");
  need(l.agent_trace_tokens > 0 && l.judge_trace_tokens > 0 && l.proposer_trace_tokens > 0,
       "limits.*_trace_tokens must be positive");
  need(l.agent_window >= 1 && l.judge_window >= 1 && l.proposer_window >= 1, "limits.*_window must be >= 1");
  need(l.feedback_loops == 1, "limits.feedback_loops: only one refinement pass is supported");
  need(l.temperature >= 0, "limits.temperature must be >= 0");
  need(l.top_p > 0 && l.top_p <= 1, "limits.top_p must be in (0,1]");
  need(!l.top_k || *l.top_k > 0, "limits.top_k must be positive");
  need(l.p_real >= 0 && l.p_real <= 1, "limits.p_real must be in [0,1]");
  need(l.max_actions >= 1, "limits.max_actions must be >= 1");
  need(l.in_context_examples >= 1, "limits.in_context_examples must be >= 1");
  need(l.max_sequence_tokens >= 1, "limits.max_sequence_tokens must be >= 1");
  need(l.parse_retry_limit == 0 || l.parse_retry_limit == 1, "limits.parse_retry_limit must be 0 or 1");
  need(c.llm.max_attempts >= 1, "llm.max_attempts must be >= 1");
  need(c.llm.timeout_s >= 1 && c.browser.timeout_s >= 1, "timeouts must be >= 1s");
  need(c.llm.max_in_flight >= 1, "llm.max_in_flight must be >= 1");
  need(c.workers.llm >= 1 && c.workers.browser >= 1, "workers.* must be >= 1");
  need(c.ingest.top_k >= 1, "ingest.top_k must be >= 1");
  need(c.ingest.position_column >= 0 && c.ingest.value_column >= 0 && c.ingest.host_column >= 0,
       "ingest columns must be nonnegative");
  need(c.export_.test_percent >= 0 && c.export_.test_percent <= 100, "export.test_percent must be in [0,100]");
}

json to_json(const PipelineConfig& config) {
  auto copy = config;
  json j = json::object();
  for (const auto& f : fields(copy)) {
    if (f.secret) continue;
    json v = std::visit(
        [](auto* p) -> json {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) return *p ? json(**p) : json(nullptr);
          else return json(*p);
        },
        f.slot);
    if (f.section.empty()) j[f.key] = std::move(v);
    else j[f.section][f.key] = std::move(v);
  }
  return j;
}

std::uint64_t config_hash(const PipelineConfig& c) { return fnv1a64(to_json(c).dump()); }

}  // namespace flywheel
