#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "flywheel/model.hpp"
#include "flywheel/tokenizer.hpp"

namespace flywheel {

struct Viewport {
  int width = 1280;
  int height = 720;
};

// Raw page state handed over by a browser driver.
struct DomSnapshot {
  std::string url;
  std::string html;
  Viewport viewport;
  Timestamp captured_at{};
};

inline constexpr std::int64_t kDefaultObservationBudget = 2048;
inline constexpr std::int64_t kMinObservationBudget = 64;

struct EncoderConfig {
  std::int64_t observation_token_budget = kDefaultObservationBudget;
  // Null means the default ceil(bytes/4) counter.
  std::shared_ptr<const TokenCounter> tokenizer;

  const TokenCounter& counter() const { return tokenizer ? *tokenizer : default_token_counter(); }
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kTruncationMarker = "[truncated]";

// Converts a DOM snapshot into compact Markdown. Headings and text content
// are kept in document order and every operable element gets its own line:
//
//   [id: 5] Sales link
//   [id: 13] "Name..." (Enter your name text input)
//   [id: 71] "$250 (5)" (range slider min: 0 max: 50 step: 1)
//   [id: 67] "blue" (color select from: red, blue, green)
//   [id: 21] "I agree to the terms and conditions" (checkbox)
//
// Ids are 0,1,2,... in document order. Hidden elements, scripts, styles and
// comments are dropped. When the result exceeds the token budget, whole lines
// are dropped from the end and the text ends with "[truncated]".
Observation encode(const DomSnapshot& snapshot, const EncoderConfig& config = {});

}  // namespace flywheel
