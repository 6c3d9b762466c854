#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flywheel::html {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  enum class Kind { element, text };

  Kind kind = Kind::element;
  std::string tag;  // lowercase; empty for text and the document root
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string text;  // entity-decoded, for text nodes
  std::vector<std::unique_ptr<Node>> children;
  Node* parent = nullptr;

  bool is_element(std::string_view name) const { return kind == Kind::element && tag == name; }
  std::optional<std::string_view> attr(std::string_view name) const;
  bool has_attr(std::string_view name) const { return attr(name).has_value(); }
};

// Lenient tree builder. Recovers from unclosed and stray tags the way
// browsers roughly do (implicit </p>, </li>, </option>, </td>, ...).
// Rejects only byte streams that are not text: embedded NULs or invalid UTF-8.
class Document {
 public:
  static Document parse(std::string_view html);

  const Node& root() const { return *root_; }

 private:
  std::unique_ptr<Node> root_;
};

std::string decode_entities(std::string_view text);

// Concatenated descendant text with whitespace collapsed to single spaces.
std::string text_content(const Node& node);

bool is_valid_utf8(std::string_view s);

}  // namespace flywheel::html
