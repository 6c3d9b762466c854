#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace flywheel::prompts {

// Text assets compiled in from assets/. Throws std::out_of_range for an
// unknown name.
std::string_view asset(std::string_view file_name);

inline std::string_view proposer_seed_system() { return asset("proposer_seed_system.txt"); }
inline std::string_view proposer_refine_system() { return asset("proposer_refine_system.txt"); }
inline std::string_view agent_system() { return asset("agent_system.txt"); }
inline std::string_view judge_system() { return asset("judge_system.txt"); }
inline std::string_view categorizer_system() { return asset("categorizer_system.txt"); }

struct ExampleTask {
  std::string domain;
  std::string task;

  bool operator==(const ExampleTask&) const = default;
};

// Parses a JSON list of {"domain": ..., "task": ...} objects.
std::vector<ExampleTask> parse_example_pool(std::string_view json_text);

// The shipped in-context example pool (50 pairs).
const std::vector<ExampleTask>& default_example_pool();

}  // namespace flywheel::prompts
