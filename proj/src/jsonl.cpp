#include "flywheel/jsonl.hpp"

namespace flywheel {

JsonlWriter::JsonlWriter(const std::string& path, bool append)
    : out_(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc)) {
  if (!out_) throw std::runtime_error("cannot write " + path);
}

void JsonlWriter::write_line(const std::string& line) {
  std::lock_guard lock(mu_);
  out_ << line << '\n';
}

void JsonlWriter::flush() {
  std::lock_guard lock(mu_);
  out_.flush();
}

}  // namespace flywheel
