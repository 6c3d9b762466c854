#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace flywheel {

// 64-bit FNV-1a. Stable across platforms; used for per-site seeds, split
// assignment and manifest config hashes.
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-site seed derived from the root seed and the host.
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view host);

std::string hex64(std::uint64_t value);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

std::string base64_encode(std::string_view bytes);
// Returns nullopt on malformed input.
std::optional<std::string> base64_decode(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Applies fn to every item on up to `workers` threads. Results are returned in
// input order, so output built from them does not depend on scheduling. An
// exception escaping fn is rethrown after all workers finish.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, std::size_t workers, Fn&& fn)
    -> std::vector<decltype(fn(items.front()))> {
  using Out = decltype(fn(items.front()));
  std::vector<std::optional<Out>> slots(items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto work = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      if (failed) return;
      try {
        slots[i].emplace(fn(items[i]));
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(items.size(), 1));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Out> out;
  out.reserve(items.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace flywheel
