#include "flywheel/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <regex>
#include <utility>

namespace flywheel {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Safety, std::string_view>, 3> kSafetyNames{{
    {Safety::unknown, "unknown"},
    {Safety::safe, "safe"},
    {Safety::unsafe, "unsafe"},
}};

constexpr std::array<std::pair<ElementRole, std::string_view>, 8> kRoleNames{{
    {ElementRole::link, "link"},
    {ElementRole::button, "button"},
    {ElementRole::text_input, "text-input"},
    {ElementRole::range_slider, "range-slider"},
    {ElementRole::select, "select"},
    {ElementRole::checkbox, "checkbox"},
    {ElementRole::image, "image"},
    {ElementRole::other, "other"},
}};

constexpr std::array<std::pair<ActionKey, std::string_view>, kActionKeyCount> kActionNames{{
    {ActionKey::click, "click"},
    {ActionKey::hover, "hover"},
    {ActionKey::scroll, "scroll"},
    {ActionKey::fill, "fill"},
    {ActionKey::select_option, "select_option"},
    {ActionKey::set_checked, "set_checked"},
    {ActionKey::go_back, "go_back"},
    {ActionKey::go_to, "goto"},
    {ActionKey::stop, "stop"},
}};

constexpr std::array<std::pair<Termination, std::string_view>, 4> kTerminationNames{{
    {Termination::stopped, "stopped"},
    {Termination::action_cap, "action_cap"},
    {Termination::parse_error, "parse_error"},
    {Termination::browser_error, "browser_error"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view name) {
  for (const auto& [e, n] : table)
    if (n == name) return e;
  return std::nullopt;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(key, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(key, e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(key, e.what());
  }
}

template <typename E, std::size_t N>
E required_enum(const json& j, const char* key, const std::array<std::pair<E, std::string_view>, N>& table) {
  const auto text = required<std::string>(j, key);
  const auto v = value_of(table, text);
  if (!v) throw ValidationError(key, "unknown value '" + text + "'");
  return *v;
}

bool in_unit_interval(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

Scalar scalar_from_json(const json& j, const std::string& key) {
  switch (j.type()) {
    case json::value_t::boolean: return j.get<bool>();
    case json::value_t::number_integer: return j.get<std::int64_t>();
    case json::value_t::number_unsigned: {
      const auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) throw ValidationError("action_kwargs." + key, "integer out of range");
      return static_cast<std::int64_t>(u);
    }
    case json::value_t::number_float: return j.get<double>();
    case json::value_t::string: return j.get<std::string>();
    default: throw ValidationError("action_kwargs." + key, "expected a scalar");
  }
}

}  // namespace

std::string_view to_string(Safety s) { return name_of(kSafetyNames, s); }
std::string_view to_string(ElementRole r) { return name_of(kRoleNames, r); }
std::string_view to_string(ActionKey k) { return name_of(kActionNames, k); }
std::string_view to_string(Termination t) { return name_of(kTerminationNames, t); }

std::optional<Safety> parse_safety(std::string_view s) { return value_of(kSafetyNames, s); }
std::optional<ElementRole> parse_element_role(std::string_view s) { return value_of(kRoleNames, s); }
std::optional<Termination> parse_termination(std::string_view s) { return value_of(kTerminationNames, s); }

std::optional<ActionKey> parse_action_key(std::string_view s) {
  if (s == "select") return ActionKey::select_option;
  return value_of(kActionNames, s);
}

JudgeScores JudgeScores::from_raw(double success, double efficiency, double self_correction,
                                  std::string reasoning) {
  JudgeScores s;
  s.success = success;
  s.efficiency = efficiency;
  s.self_correction = self_correction;
  s.confidence = 2.0 * std::abs(success - 0.5);
  s.success_binary = success > 0.5;
  s.judge_reasoning = std::move(reasoning);
  return s;
}

// --- validation ----------------------------------------------------------

namespace {

bool is_number(const Scalar& s) {
  return std::holds_alternative<std::int64_t>(s) || std::holds_alternative<double>(s);
}

template <typename T>
bool holds(const ActionKwargs& kw, const char* key) {
  auto it = kw.find(key);
  return it != kw.end() && std::holds_alternative<T>(it->second);
}

std::optional<ActionProblem> kwargs_problem(std::string message) {
  return ActionProblem{ActionViolation::bad_kwargs, std::move(message)};
}

}  // namespace

std::optional<ActionProblem> check_action(const Action& action) {
  const auto& kw = action.kwargs;
  const auto name = std::string(to_string(action.key));

  auto only_keys = [&](std::initializer_list<const char*> allowed) -> std::optional<ActionProblem> {
    for (const auto& [k, _] : kw) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
        return kwargs_problem(name + " does not accept argument '" + k + "'");
    }
    return std::nullopt;
  };

  std::optional<ActionProblem> problem;
  switch (action.key) {
    case ActionKey::click:
    case ActionKey::hover:
    case ActionKey::go_back:
      problem = only_keys({});
      break;
    case ActionKey::scroll:
      problem = only_keys({"delta_x", "delta_y"});
      if (!problem && (!kw.contains("delta_x") || !is_number(kw.at("delta_x"))))
        problem = kwargs_problem("scroll requires numeric delta_x");
      if (!problem && (!kw.contains("delta_y") || !is_number(kw.at("delta_y"))))
        problem = kwargs_problem("scroll requires numeric delta_y");
      break;
    case ActionKey::fill:
      problem = only_keys({"value"});
      if (!problem && !holds<std::string>(kw, "value")) problem = kwargs_problem("fill requires string value");
      break;
    case ActionKey::select_option:
      problem = only_keys({"label"});
      if (!problem && !holds<std::string>(kw, "label"))
        problem = kwargs_problem("select_option requires string label");
      break;
    case ActionKey::set_checked:
      problem = only_keys({"checked"});
      if (!problem && !holds<bool>(kw, "checked")) problem = kwargs_problem("set_checked requires boolean checked");
      break;
    case ActionKey::go_to:
      problem = only_keys({"url"});
      if (!problem && !holds<std::string>(kw, "url")) problem = kwargs_problem("goto requires string url");
      break;
    case ActionKey::stop:
      problem = only_keys({"answer"});
      if (!problem && kw.contains("answer") && !holds<std::string>(kw, "answer"))
        problem = kwargs_problem("stop answer must be a string");
      break;
  }
  if (problem) return problem;

  const bool needs_target = action.key == ActionKey::click || action.key == ActionKey::hover ||
                            action.key == ActionKey::fill || action.key == ActionKey::select_option ||
                            action.key == ActionKey::set_checked;
  if (needs_target && !action.target_element_id)
    return ActionProblem{ActionViolation::bad_target, name + " requires target_element_id"};
  if (!needs_target && action.target_element_id)
    return ActionProblem{ActionViolation::bad_target, name + " must not have a target_element_id"};
  if (action.target_element_id && *action.target_element_id < 0)
    return ActionProblem{ActionViolation::bad_target, "target_element_id must be nonnegative"};
  return std::nullopt;
}

void validate(const SiteRecord& v) {
  if (v.host.empty()) throw ValidationError("host", "empty");
  if (v.host.find("://") != std::string::npos) throw ValidationError("host", "must not carry a scheme");
  if (std::any_of(v.host.begin(), v.host.end(), [](unsigned char c) { return std::isupper(c) || std::isspace(c); }))
    throw ValidationError("host", "must be lowercase without whitespace");
  if (v.rank_position < 1) throw ValidationError("rank_position", "must be positive");
  if (!std::isfinite(v.rank_value) || v.rank_value < 0) throw ValidationError("rank_value", "must be nonnegative");
  if (v.safety == Safety::unsafe && v.seed_task) throw ValidationError("seed_task", "unsafe sites carry no task");
  if (v.refined_task && !v.seed_task) throw ValidationError("refined_task", "requires a seed_task");
  if (v.refined_task) validate(*v.refined_task);
}

void validate(const RefinedTask& v) {
  if (v.proposed_task.empty()) throw ValidationError("proposed_task", "empty");
  if (v.steps.empty()) throw ValidationError("steps", "needs at least one step");
  if (v.criteria.empty()) throw ValidationError("criteria", "empty");
}

void validate(const ElementInfo& v) {
  if (v.element_id < 0) throw ValidationError("element_id", "must be nonnegative");
}

void validate(const Observation& v, std::optional<std::int64_t> token_budget) {
  if (v.token_count < 0) throw ValidationError("token_count", "must be nonnegative");
  if (token_budget && v.token_count > *token_budget) throw ValidationError("token_count", "exceeds budget");
  for (const auto& [id, info] : v.elements) {
    validate(info);
    if (id != info.element_id) throw ValidationError("elements", "key/element_id mismatch");
  }
  static const std::regex marker(R"(\[id: (\d+)\])");
  for (auto it = std::sregex_iterator(v.markdown.begin(), v.markdown.end(), marker); it != std::sregex_iterator();
       ++it) {
    const auto id = std::stoll((*it)[1].str());
    if (!v.elements.contains(id))
      throw ValidationError("markdown", "marker [id: " + std::to_string(id) + "] has no element");
  }
}

void validate(const Action& v) {
  if (auto problem = check_action(v)) {
    throw ValidationError(problem->kind == ActionViolation::bad_kwargs ? "action_kwargs" : "target_element_id",
                          problem->message);
  }
}

void validate(const Step& v) {
  if (v.index < 0) throw ValidationError("index", "must be nonnegative");
  if (v.parse_retries < 0 || v.parse_retries > 1) throw ValidationError("parse_retries", "must be 0 or 1");
  validate(v.observation);
  if (v.action) validate(*v.action);
}

void validate(const JudgeScores& v) {
  if (!in_unit_interval(v.success)) throw ValidationError("success", "outside [0,1]");
  if (!in_unit_interval(v.efficiency)) throw ValidationError("efficiency", "outside [0,1]");
  if (!in_unit_interval(v.self_correction)) throw ValidationError("self_correction", "outside [0,1]");
  if (std::abs(v.confidence - 2.0 * std::abs(v.success - 0.5)) > 1e-12)
    throw ValidationError("confidence", "must equal 2*|success-0.5|");
  if (v.success_binary != (v.success > 0.5)) throw ValidationError("success_binary", "must equal success > 0.5");
}

void validate(const Trajectory& v, std::optional<std::int64_t> action_cap) {
  validate(v.site);
  if (v.task.empty()) throw ValidationError("task", "empty");
  if (action_cap && static_cast<std::int64_t>(v.steps.size()) > *action_cap) throw ValidationError("steps", "exceeds action cap");
  for (std::size_t i = 0; i < v.steps.size(); ++i) {
    validate(v.steps[i]);
    if (v.steps[i].index != static_cast<std::int64_t>(i)) throw ValidationError("steps", "indices must be 0..n-1");
  }
  for (std::size_t i = 0; i < v.steps.size(); ++i) {
    if (v.steps[i].action) continue;
    if (i + 1 != v.steps.size() || v.termination != Termination::parse_error)
      throw ValidationError("steps", "only the final step of a parse_error episode may lack an action");
  }
  const bool last_is_stop =
      !v.steps.empty() && v.steps.back().action && v.steps.back().action->key == ActionKey::stop;
  if ((v.termination == Termination::stopped) != last_is_stop)
    throw ValidationError("termination", "stopped iff the last action is stop");
  if (v.judge) validate(*v.judge);
}

// --- JSON ----------------------------------------------------------------

json scalar_to_json(const Scalar& s) {
  return std::visit([](const auto& x) { return json(x); }, s);
}

void to_json(json& j, const RefinedTask& v) {
  j = json{{"proposed_task", v.proposed_task}, {"steps", v.steps}, {"criteria", v.criteria}};
}

void from_json(const json& j, RefinedTask& v) {
  v.proposed_task = required<std::string>(j, "proposed_task");
  v.steps = required<std::vector<std::string>>(j, "steps");
  v.criteria = required<std::string>(j, "criteria");
}

void to_json(json& j, const SiteRecord& v) {
  j = json{{"host", v.host},
           {"rank_position", v.rank_position},
           {"rank_value", v.rank_value},
           {"safety", to_string(v.safety)}};
  if (v.seed_task) j["seed_task"] = *v.seed_task;
  if (v.refined_task) j["refined_task"] = *v.refined_task;
}

void from_json(const json& j, SiteRecord& v) {
  v.host = required<std::string>(j, "host");
  v.rank_position = required<std::int64_t>(j, "rank_position");
  v.rank_value = required<double>(j, "rank_value");
  v.safety = required_enum(j, "safety", kSafetyNames);
  v.seed_task = optional_field<std::string>(j, "seed_task");
  v.refined_task = optional_field<RefinedTask>(j, "refined_task");
}

void to_json(json& j, const ElementInfo& v) {
  j = json{{"element_id", v.element_id}, {"role", to_string(v.role)}, {"label", v.label}, {"metadata", v.metadata}};
  if (v.current_value) j["current_value"] = *v.current_value;
}

void from_json(const json& j, ElementInfo& v) {
  v.element_id = required<std::int64_t>(j, "element_id");
  v.role = required_enum(j, "role", kRoleNames);
  v.label = required<std::string>(j, "label");
  v.current_value = optional_field<std::string>(j, "current_value");
  v.metadata = j.contains("metadata") ? required<std::map<std::string, std::string>>(j, "metadata")
                                      : std::map<std::string, std::string>{};
}

void to_json(json& j, const Observation& v) {
  json elements = json::array();
  for (const auto& [_, info] : v.elements) elements.push_back(info);
  j = json{{"url", v.url},
           {"markdown", v.markdown},
           {"elements", std::move(elements)},
           {"token_count", v.token_count},
           {"captured_at_ms", v.captured_at.time_since_epoch().count()}};
  if (v.screenshot_ref) j["screenshot_ref"] = *v.screenshot_ref;
}

void from_json(const json& j, Observation& v) {
  v.url = required<std::string>(j, "url");
  v.markdown = required<std::string>(j, "markdown");
  v.elements.clear();
  for (const auto& e : required<json>(j, "elements")) {
    auto info = e.get<ElementInfo>();
    if (!v.elements.emplace(info.element_id, info).second)
      throw ValidationError("elements", "duplicate element_id " + std::to_string(info.element_id));
  }
  v.token_count = required<std::int64_t>(j, "token_count");
  v.screenshot_ref = optional_field<std::string>(j, "screenshot_ref");
  v.captured_at = Timestamp(std::chrono::milliseconds(required<std::int64_t>(j, "captured_at_ms")));
}

void to_json(json& j, const Action& v) {
  json kwargs = json::object();
  for (const auto& [k, s] : v.kwargs) kwargs[k] = scalar_to_json(s);
  j = json{{"action_key", to_string(v.key)},
           {"action_kwargs", std::move(kwargs)},
           {"target_element_id", v.target_element_id ? json(*v.target_element_id) : json(nullptr)}};
}

void from_json(const json& j, Action& v) {
  const auto key = required<std::string>(j, "action_key");
  const auto parsed = parse_action_key(key);
  if (!parsed) throw ValidationError("action_key", "unknown action '" + key + "'");
  v.key = *parsed;
  v.kwargs.clear();
  const auto& kwargs = j.contains("action_kwargs") ? j.at("action_kwargs") : json::object();
  if (!kwargs.is_object()) throw ValidationError("action_kwargs", "expected an object");
  for (auto it = kwargs.begin(); it != kwargs.end(); ++it) v.kwargs[it.key()] = scalar_from_json(it.value(), it.key());
  v.target_element_id = optional_field<std::int64_t>(j, "target_element_id");
}

void to_json(json& j, const Step& v) {
  j = json{{"index", v.index},
           {"observation", v.observation},
           {"reasoning", v.reasoning},
           {"action", v.action ? json(*v.action) : json(nullptr)},
           {"raw_response", v.raw_response},
           {"parse_retries", v.parse_retries},
           {"off_site", v.off_site}};
}

void from_json(const json& j, Step& v) {
  v.index = required<std::int64_t>(j, "index");
  v.observation = required<Observation>(j, "observation");
  v.reasoning = required<std::string>(j, "reasoning");
  if (!j.contains("action")) throw ValidationError("action", "missing");
  v.action = optional_field<Action>(j, "action");
  v.raw_response = required<std::string>(j, "raw_response");
  v.parse_retries = required<int>(j, "parse_retries");
  v.off_site = j.value("off_site", false);
}

void to_json(json& j, const JudgeScores& v) {
  j = json{{"success", v.success},
           {"efficiency", v.efficiency},
           {"self_correction", v.self_correction},
           {"confidence", v.confidence},
           {"success_binary", v.success_binary},
           {"judge_reasoning", v.judge_reasoning}};
}

void from_json(const json& j, JudgeScores& v) {
  v.success = required<double>(j, "success");
  v.efficiency = required<double>(j, "efficiency");
  v.self_correction = required<double>(j, "self_correction");
  v.confidence = required<double>(j, "confidence");
  v.success_binary = required<bool>(j, "success_binary");
  v.judge_reasoning = j.value("judge_reasoning", std::string{});
}

void to_json(json& j, const Trajectory& v) {
  j = json{{"site", v.site}, {"task", v.task}, {"steps", v.steps}, {"termination", to_string(v.termination)}};
  if (v.final_answer) j["final_answer"] = *v.final_answer;
  if (v.judge) j["judge"] = *v.judge;
  if (v.error) j["error"] = *v.error;
}

void from_json(const json& j, Trajectory& v) {
  v.site = required<SiteRecord>(j, "site");
  v.task = required<std::string>(j, "task");
  v.steps = required<std::vector<Step>>(j, "steps");
  v.termination = required_enum(j, "termination", kTerminationNames);
  v.final_answer = optional_field<std::string>(j, "final_answer");
  v.judge = optional_field<JudgeScores>(j, "judge");
  v.error = optional_field<std::string>(j, "error");
}

}  // namespace flywheel
