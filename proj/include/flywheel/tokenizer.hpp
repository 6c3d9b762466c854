#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

namespace flywheel {

// Counting contract for token budgets. Implementations must be deterministic
// and monotone under concatenation: count(a + b) >= max(count(a), count(b)).
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  virtual std::int64_t count(std::string_view text) const = 0;
};

// ceil(bytes / 4).
class CharApproxCounter final : public TokenCounter {
 public:
  std::int64_t count(std::string_view text) const override {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
  }
};

const TokenCounter& default_token_counter();

inline std::int64_t count_tokens(std::string_view text) { return default_token_counter().count(text); }

}  // namespace flywheel
