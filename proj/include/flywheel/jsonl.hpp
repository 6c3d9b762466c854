#pragma once

#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "flywheel/model.hpp"

namespace flywheel {

struct JsonlReadResult {
  std::size_t lines = 0;
  std::size_t invalid = 0;
  std::vector<std::string> errors;  // "line N: message"
};

// Streams a JSONL file of T, calling sink for every valid record. Blank lines
// are ignored; invalid lines are counted and reported, never fatal.
template <typename T>
JsonlReadResult read_jsonl(const std::string& path, const std::function<void(T&&)>& sink) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  JsonlReadResult result;
  std::string line;
  while (std::getline(in, line)) {
    ++result.lines;
    if (line.empty()) continue;
    try {
      sink(deserialize_record<T>(line));
    } catch (const ValidationError& e) {
      ++result.invalid;
      result.errors.push_back("line " + std::to_string(result.lines) + ": " + e.what());
    }
  }
  return result;
}

template <typename T>
std::vector<T> load_jsonl(const std::string& path, JsonlReadResult* report = nullptr) {
  std::vector<T> out;
  auto r = read_jsonl<T>(path, [&](T&& v) { out.push_back(std::move(v)); });
  if (report) *report = std::move(r);
  return out;
}

// Line-oriented writer. Thread-safe; every write is one complete line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path, bool append = false);

  template <typename T>
  void write(const T& record) {
    write_line(serialize_record(record));
  }
  void write_line(const std::string& line);
  void flush();

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace flywheel
