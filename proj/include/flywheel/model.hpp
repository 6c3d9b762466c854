#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace flywheel {

// Schema version written into every JSONL line.
inline constexpr int kSchemaVersion = 1;

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// Raised when a record violates one of its invariants. field() names the
// offending field using the serialized key.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Safety { unknown, safe, unsafe };

struct RefinedTask {
  std::string proposed_task;
  std::vector<std::string> steps;
  std::string criteria;

  bool operator==(const RefinedTask&) const = default;
};

struct SiteRecord {
  std::string host;
  std::int64_t rank_position = 1;
  double rank_value = 0.0;
  Safety safety = Safety::unknown;
  std::optional<std::string> seed_task;
  std::optional<RefinedTask> refined_task;

  bool operator==(const SiteRecord&) const = default;
};

enum class ElementRole { link, button, text_input, range_slider, select, checkbox, image, other };

struct ElementInfo {
  std::int64_t element_id = 0;
  ElementRole role = ElementRole::other;
  std::string label;
  std::optional<std::string> current_value;
  std::map<std::string, std::string> metadata;

  bool operator==(const ElementInfo&) const = default;
};

struct Observation {
  std::string url;
  std::string markdown;
  std::map<std::int64_t, ElementInfo> elements;
  std::int64_t token_count = 0;
  std::optional<std::string> screenshot_ref;
  Timestamp captured_at{};

  bool operator==(const Observation&) const = default;
};

enum class ActionKey { click, hover, scroll, fill, select_option, set_checked, go_back, go_to, stop };

inline constexpr std::size_t kActionKeyCount = 9;

// Action argument values are JSON scalars. Integers and reals are kept apart
// so that a round trip through JSON preserves the literal type.
using Scalar = std::variant<bool, std::int64_t, double, std::string>;
using ActionKwargs = std::map<std::string, Scalar>;

struct Action {
  ActionKey key = ActionKey::stop;
  ActionKwargs kwargs;
  std::optional<std::int64_t> target_element_id;

  bool operator==(const Action&) const = default;

  static Action click(std::int64_t id) { return {ActionKey::click, {}, id}; }
  static Action hover(std::int64_t id) { return {ActionKey::hover, {}, id}; }
  static Action scroll(std::int64_t dx, std::int64_t dy) {
    return {ActionKey::scroll, {{"delta_x", dx}, {"delta_y", dy}}, std::nullopt};
  }
  static Action fill(std::int64_t id, std::string value) {
    return {ActionKey::fill, {{"value", std::move(value)}}, id};
  }
  static Action select_option(std::int64_t id, std::string label) {
    return {ActionKey::select_option, {{"label", std::move(label)}}, id};
  }
  static Action set_checked(std::int64_t id, bool checked) {
    return {ActionKey::set_checked, {{"checked", checked}}, id};
  }
  static Action go_back() { return {ActionKey::go_back, {}, std::nullopt}; }
  static Action go_to(std::string url) { return {ActionKey::go_to, {{"url", std::move(url)}}, std::nullopt}; }
  static Action stop(std::optional<std::string> answer = std::nullopt) {
    Action a{ActionKey::stop, {}, std::nullopt};
    if (answer) a.kwargs.emplace("answer", std::move(*answer));
    return a;
  }
};

struct Step {
  std::int64_t index = 0;
  Observation observation;
  std::string reasoning;
  // Absent only on the final step of a parse_error episode, where neither
  // response yielded a valid action.
  std::optional<Action> action;
  std::string raw_response;
  int parse_retries = 0;
  // goto that left the origin of the episode's start site.
  bool off_site = false;

  bool operator==(const Step&) const = default;
};

enum class Termination { stopped, action_cap, parse_error, browser_error };

struct JudgeScores {
  double success = 0.0;
  double efficiency = 0.0;
  double self_correction = 0.0;
  double confidence = 1.0;
  bool success_binary = false;
  std::string judge_reasoning;

  bool operator==(const JudgeScores&) const = default;

  // Builds scores with confidence and success_binary derived from success.
  static JudgeScores from_raw(double success, double efficiency, double self_correction,
                              std::string reasoning = {});
};

inline constexpr std::int64_t kDefaultActionCap = 30;

struct Trajectory {
  SiteRecord site;
  std::string task;
  std::vector<Step> steps;
  Termination termination = Termination::stopped;
  std::optional<std::string> final_answer;
  std::optional<JudgeScores> judge;
  // Free-form failure detail for browser_error / parse_error terminations.
  std::optional<std::string> error;

  bool operator==(const Trajectory&) const = default;
};

// --- enum <-> text -------------------------------------------------------

std::string_view to_string(Safety s);
std::string_view to_string(ElementRole r);
std::string_view to_string(ActionKey k);
std::string_view to_string(Termination t);

std::optional<Safety> parse_safety(std::string_view s);
std::optional<ElementRole> parse_element_role(std::string_view s);
// Accepts the nine canonical keys plus "select" as an alias of select_option.
std::optional<ActionKey> parse_action_key(std::string_view s);
std::optional<Termination> parse_termination(std::string_view s);

// --- validation ----------------------------------------------------------

enum class ActionViolation { bad_kwargs, bad_target };

struct ActionProblem {
  ActionViolation kind;
  std::string message;
};

// Checks the per-key kwargs and target rules; nullopt when the action is valid.
std::optional<ActionProblem> check_action(const Action& action);

void validate(const SiteRecord& v);
void validate(const RefinedTask& v);
void validate(const ElementInfo& v);
void validate(const Observation& v, std::optional<std::int64_t> token_budget = std::nullopt);
void validate(const Action& v);
void validate(const Step& v);
void validate(const JudgeScores& v);
// The step cap is only checked when given; stages pass their configured cap.
void validate(const Trajectory& v, std::optional<std::int64_t> action_cap = std::nullopt);

// --- JSON ----------------------------------------------------------------

nlohmann::json scalar_to_json(const Scalar& s);

void to_json(nlohmann::json& j, const RefinedTask& v);
void to_json(nlohmann::json& j, const SiteRecord& v);
void to_json(nlohmann::json& j, const ElementInfo& v);
void to_json(nlohmann::json& j, const Observation& v);
void to_json(nlohmann::json& j, const Action& v);
void to_json(nlohmann::json& j, const Step& v);
void to_json(nlohmann::json& j, const JudgeScores& v);
void to_json(nlohmann::json& j, const Trajectory& v);

void from_json(const nlohmann::json& j, RefinedTask& v);
void from_json(const nlohmann::json& j, SiteRecord& v);
void from_json(const nlohmann::json& j, ElementInfo& v);
void from_json(const nlohmann::json& j, Observation& v);
void from_json(const nlohmann::json& j, Action& v);
void from_json(const nlohmann::json& j, Step& v);
void from_json(const nlohmann::json& j, JudgeScores& v);
void from_json(const nlohmann::json& j, Trajectory& v);

// Canonical single-line form of a record: compact JSON with a leading
// schema version. Validates first; throws ValidationError naming the field.
template <typename T>
std::string serialize_record(const T& record) {
  validate(record);
  const nlohmann::json body = record;
  const std::string text = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
  const std::string head = "{\"v\":" + std::to_string(kSchemaVersion);
  return text.size() <= 2 ? head + "}" : head + "," + text.substr(1);
}

// Inverse of serialize_record. Throws ValidationError on schema, version or
// invariant problems.
template <typename T>
T deserialize_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("<line>", e.what());
  }
  if (!j.is_object()) throw ValidationError("<line>", "expected a JSON object");
  if (!j.contains("v") || j["v"] != kSchemaVersion) throw ValidationError("v", "unsupported schema version");
  j.erase("v");
  T out;
  try {
    out = j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("<line>", e.what());
  }
  validate(out);
  return out;
}

}  // namespace flywheel
