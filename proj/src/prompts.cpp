#include "flywheel/prompts.hpp"

#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

namespace flywheel::assets {
extern const std::pair<std::string_view, std::string_view> kEmbedded[];
extern const std::size_t kEmbeddedCount;
}  // namespace flywheel::assets

namespace flywheel::prompts {

std::string_view asset(std::string_view file_name) {
  for (std::size_t i = 0; i < assets::kEmbeddedCount; ++i) {
    if (assets::kEmbedded[i].first == file_name) return assets::kEmbedded[i].second;
  }
  throw std::out_of_range("no embedded asset named " + std::string(file_name));
}

std::vector<ExampleTask> parse_example_pool(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text);
  std::vector<ExampleTask> pool;
  for (const auto& item : j) pool.push_back({item.at("domain").get<std::string>(), item.at("task").get<std::string>()});
  return pool;
}

const std::vector<ExampleTask>& default_example_pool() {
  static const auto pool = parse_example_pool(asset("example_tasks.json"));
  return pool;
}

}  // namespace flywheel::prompts
