#include "flywheel/action_codec.hpp"

#include <optional>

#include "flywheel/util.hpp"

namespace flywheel {

using nlohmann::json;

namespace {

struct FenceSpan {
  std::size_t block_begin;    // first byte of the opening fence line
  std::size_t content_begin;  // first byte after the opening fence line
  std::size_t content_end;    // one past the newline ending the content
  std::size_t block_end;      // one past the closing fence line
};

// Position of a fence at the start of a line (after optional indentation).
bool fence_at_line(std::string_view text, std::size_t line_begin, std::size_t& fence_pos) {
  std::size_t p = line_begin;
  while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
  if (text.compare(p, 3, "```") != 0) return false;
  fence_pos = p;
  return true;
}

std::size_t line_end(std::string_view text, std::size_t from) {
  const auto nl = text.find('\n', from);
  return nl == std::string_view::npos ? text.size() : nl;
}

std::optional<FenceSpan> find_fence(std::string_view text, std::size_t from) {
  for (std::size_t line = from; line < text.size(); line = line_end(text, line) + 1) {
    std::size_t fence = 0;
    if (!fence_at_line(text, line, fence)) continue;
    const auto open_end = line_end(text, fence);
    // Single-line block: ```{...}```
    const auto inline_close = text.substr(fence + 3, open_end - fence - 3).find("```");
    if (inline_close != std::string_view::npos) {
      const auto begin = fence + 3;
      return FenceSpan{line, begin, begin + inline_close, std::min(open_end + 1, text.size())};
    }
    if (open_end >= text.size()) return std::nullopt;
    for (std::size_t l = open_end + 1; l <= text.size() && l < text.size(); l = line_end(text, l) + 1) {
      std::size_t close = 0;
      if (fence_at_line(text, l, close)) {
        return FenceSpan{line, open_end + 1, l, std::min(line_end(text, close) + 1, text.size())};
      }
    }
    return std::nullopt;
  }
  return std::nullopt;
}

[[noreturn]] void fail(ParseFailure kind, const std::string& message) { throw ActionParseError(kind, message); }

}  // namespace

std::string_view to_string(ParseFailure f) {
  switch (f) {
    case ParseFailure::no_block: return "NoBlock";
    case ParseFailure::malformed_json: return "MalformedJson";
    case ParseFailure::unknown_action_key: return "UnknownActionKey";
    case ParseFailure::bad_kwargs: return "BadKwargs";
    case ParseFailure::bad_target_id: return "BadTargetId";
  }
  return "?";
}

std::string extract_first_fenced_block(std::string_view response) {
  const auto span = find_fence(response, 0);
  if (!span) fail(ParseFailure::no_block, "no fenced code block found");
  auto content = response.substr(span->content_begin, span->content_end - span->content_begin);
  // Drop the newline that ends the last content line before the closing fence.
  if (!content.empty() && content.back() == '\n') content.remove_suffix(1);
  if (!content.empty() && content.back() == '\r') content.remove_suffix(1);
  return std::string(content);
}

std::string text_outside_first_block(std::string_view response) {
  const auto span = find_fence(response, 0);
  if (!span) return std::string(trim(response));
  std::string out(trim(response.substr(0, span->block_begin)));
  const auto tail = trim(response.substr(span->block_end));
  if (!tail.empty()) {
    if (!out.empty()) out += "\n\n";
    out += tail;
  }
  return out;
}

Action parse_action(std::string_view response) {
  const auto block = extract_first_fenced_block(response);
  json j;
  try {
    j = json::parse(block, nullptr, true, false);
  } catch (const json::parse_error& e) {
    fail(ParseFailure::malformed_json, e.what());
  }
  if (!j.is_object()) fail(ParseFailure::malformed_json, "action must be a JSON object");

  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "action_key" && k != "action_kwargs" && k != "target_element_id")
      fail(ParseFailure::bad_kwargs, "unexpected key '" + k + "' in action object");
  }
  if (!j.contains("action_key") || !j["action_key"].is_string())
    fail(ParseFailure::unknown_action_key, "action_key must be a string");
  const auto key_text = j["action_key"].get<std::string>();
  const auto key = parse_action_key(key_text);
  if (!key) fail(ParseFailure::unknown_action_key, "unknown action '" + key_text + "'");

  Action action;
  action.key = *key;
  if (!j.contains("action_kwargs")) fail(ParseFailure::bad_kwargs, "missing action_kwargs");
  const auto& kwargs = j["action_kwargs"];
  if (!kwargs.is_object()) fail(ParseFailure::bad_kwargs, "action_kwargs must be an object");
  for (auto it = kwargs.begin(); it != kwargs.end(); ++it) {
    const auto& v = it.value();
    if (v.is_boolean()) action.kwargs[it.key()] = v.get<bool>();
    else if (v.is_number_integer() && (v.is_number_unsigned() ? v.get<std::uint64_t>() <= INT64_MAX : true))
      action.kwargs[it.key()] = v.get<std::int64_t>();
    else if (v.is_number()) action.kwargs[it.key()] = v.get<double>();
    else if (v.is_string()) action.kwargs[it.key()] = v.get<std::string>();
    else fail(ParseFailure::bad_kwargs, "argument '" + it.key() + "' must be a scalar");
  }

  if (j.contains("target_element_id") && !j["target_element_id"].is_null()) {
    const auto& t = j["target_element_id"];
    if (!t.is_number_integer() || (t.is_number_unsigned() && t.get<std::uint64_t>() > INT64_MAX))
      fail(ParseFailure::bad_target_id, "target_element_id must be an integer or null");
    action.target_element_id = t.get<std::int64_t>();
  }

  if (auto problem = check_action(action)) {
    fail(problem->kind == ActionViolation::bad_kwargs ? ParseFailure::bad_kwargs : ParseFailure::bad_target_id,
         problem->message);
  }
  return action;
}

std::string render_action(const Action& action) {
  nlohmann::ordered_json j;
  j["action_key"] = to_string(action.key);
  j["action_kwargs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : action.kwargs)
    std::visit([&](const auto& x) { j["action_kwargs"][k] = x; }, v);
  j["target_element_id"] =
      action.target_element_id ? nlohmann::ordered_json(*action.target_element_id) : nlohmann::ordered_json(nullptr);
  return "```json\n" + j.dump(4) + "\n```";
}

std::string truncate_markdown(std::string_view markdown, const EncoderConfig& config) {
  const auto& counter = config.counter();
  if (counter.count(markdown) <= config.observation_token_budget) return std::string(markdown);
  std::string kept;
  std::string_view rest = markdown;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const auto line = rest.substr(0, nl);
    std::string candidate = kept;
    if (!candidate.empty()) candidate += '\n';
    candidate += line;
    if (counter.count(candidate + "\n" + std::string(kTruncationMarker)) > config.observation_token_budget) break;
    kept = std::move(candidate);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  if (!kept.empty()) kept += '\n';
  return kept + std::string(kTruncationMarker);
}

std::string render_observation_block(std::int64_t step_index, const Observation& obs, const EncoderConfig& budget) {
  return std::string(kWebpageHeader) + std::to_string(step_index) + ")\n\n" + truncate_markdown(obs.markdown, budget) +
         "\n";
}

std::string render_step_history(std::span<const Step> steps, std::size_t last_n, const EncoderConfig& budget) {
  if (last_n == 0) throw std::invalid_argument("last_n must be >= 1");
  const auto first = steps.size() > last_n ? steps.size() - last_n : 0;
  std::string out;
  for (auto i = first; i < steps.size(); ++i) {
    const auto& step = steps[i];
    if (!out.empty()) out += '\n';
    out += render_observation_block(step.index, step.observation, budget);
    out += '\n';
    out += std::string(kActionHeader) + std::to_string(step.index) + ")\n\n";
    out += step.action ? render_action(*step.action) : std::string(kNoActionText);
    out += '\n';
  }
  return out;
}

std::size_t count_observation_blocks(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t line = 0; line < text.size(); line = line_end(text, line) + 1) {
    if (text.compare(line, kWebpageHeader.size(), kWebpageHeader) == 0) ++n;
  }
  return n;
}

std::size_t count_fenced_blocks(std::string_view text) {
  std::size_t n = 0;
  std::size_t from = 0;
  while (auto span = find_fence(text, from)) {
    ++n;
    from = span->block_end;
    if (from >= text.size()) break;
  }
  return n;
}

}  // namespace flywheel
