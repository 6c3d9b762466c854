#include "flywheel/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <unordered_map>

namespace flywheel::html {

namespace {

constexpr std::array kVoidElements = {"area", "base", "br", "col", "embed", "hr", "img", "input",
                                      "link", "meta", "param", "source", "track", "wbr"};

// Elements whose content is not markup. Content of the first group is kept as
// text, the second group is discarded outright.
constexpr std::array kRcdataElements = {"textarea", "title"};
constexpr std::array kRawDropElements = {"script", "style", "noscript", "template"};

// Start tags that implicitly close an open <p>.
constexpr std::array kClosesParagraph = {"address", "article", "aside", "blockquote", "details", "div", "dl",
                                         "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3",
                                         "h4", "h5", "h6", "header", "hr", "main", "nav", "ol", "p", "pre",
                                         "section", "table", "ul"};

template <std::size_t N>
bool one_of(std::string_view s, const std::array<const char*, N>& set) {
  return std::any_of(set.begin(), set.end(), [&](const char* x) { return s == x; });
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  }
  return true;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

const std::unordered_map<std::string_view, std::uint32_t>& named_entities() {
  static const std::unordered_map<std::string_view, std::uint32_t> table{
      {"amp", '&'},      {"lt", '<'},        {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
      {"nbsp", 0xA0},    {"copy", 0xA9},     {"reg", 0xAE},     {"trade", 0x2122}, {"hellip", 0x2026},
      {"mdash", 0x2014}, {"ndash", 0x2013},  {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
      {"rdquo", 0x201D}, {"bull", 0x2022},   {"middot", 0xB7},  {"euro", 0x20AC},  {"pound", 0xA3},
      {"yen", 0xA5},     {"cent", 0xA2},     {"times", 0xD7},   {"laquo", 0xAB},   {"raquo", 0xBB},
      {"deg", 0xB0},     {"eacute", 0xE9},   {"uuml", 0xFC},    {"ouml", 0xF6},    {"auml", 0xE4},
      {"szlig", 0xDF},   {"larr", 0x2190},   {"rarr", 0x2192},  {"sect", 0xA7},    {"para", 0xB6},
      {"agrave", 0xE0},  {"aacute", 0xE1},   {"acirc", 0xE2},   {"ccedil", 0xE7},  {"egrave", 0xE8},
      {"ecirc", 0xEA},   {"iacute", 0xED},   {"ntilde", 0xF1},  {"oacute", 0xF3},  {"uacute", 0xFA},
  };
  return table;
}

class TreeBuilder {
 public:
  explicit TreeBuilder(Node* root) { stack_.push_back(root); }

  void text(std::string value) {
    if (value.empty()) return;
    Node* parent = stack_.back();
    if (!parent->children.empty() && parent->children.back()->kind == Node::Kind::text) {
      parent->children.back()->text += value;
      return;
    }
    auto node = std::make_unique<Node>();
    node->kind = Node::Kind::text;
    node->text = std::move(value);
    node->parent = parent;
    parent->children.push_back(std::move(node));
  }

  Node* open(std::string tag, std::vector<std::pair<std::string, std::string>> attrs, bool self_closing) {
    implicit_close(tag);
    Node* parent = stack_.back();
    auto node = std::make_unique<Node>();
    node->tag = std::move(tag);
    node->attrs = std::move(attrs);
    node->parent = parent;
    Node* raw = node.get();
    parent->children.push_back(std::move(node));
    if (!self_closing && !one_of(raw->tag, kVoidElements)) stack_.push_back(raw);
    return raw;
  }

  void close(std::string_view tag) {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      if (stack_[i]->tag == tag) {
        stack_.resize(i);
        return;
      }
    }
  }

 private:
  bool in_stack(std::string_view tag, std::initializer_list<std::string_view> boundaries) const {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      if (stack_[i]->tag == tag) return true;
      if (std::find(boundaries.begin(), boundaries.end(), stack_[i]->tag) != boundaries.end()) return false;
    }
    return false;
  }

  void implicit_close(std::string_view tag) {
    if (one_of(tag, kClosesParagraph) && in_stack("p", {"button", "table", "td", "th", "li"})) close("p");
    if (tag == "li" && in_stack("li", {"ul", "ol"})) close("li");
    if ((tag == "dt" || tag == "dd")) {
      if (in_stack("dt", {"dl"})) close("dt");
      if (in_stack("dd", {"dl"})) close("dd");
    }
    if (tag == "option" && in_stack("option", {"select", "datalist"})) close("option");
    if (tag == "tr" && in_stack("tr", {"table"})) close("tr");
    if (tag == "td" || tag == "th") {
      if (in_stack("td", {"tr", "table"})) close("td");
      if (in_stack("th", {"tr", "table"})) close("th");
    }
  }

  std::vector<Node*> stack_;
};

class Tokenizer {
 public:
  Tokenizer(std::string_view src, TreeBuilder& builder) : src_(src), out_(builder) {}

  void run() {
    while (pos_ < src_.size()) {
      if (src_[pos_] == '<' && try_markup()) continue;
      const auto next = src_.find('<', pos_ + 1);
      const auto end = next == std::string_view::npos ? src_.size() : next;
      out_.text(decode_entities(src_.substr(pos_, end - pos_)));
      pos_ = end;
    }
  }

 private:
  // Returns false when '<' starts no markup and should be read as text.
  bool try_markup() {
    if (src_.compare(pos_, 4, "<!--") == 0) {
      const auto end = src_.find("-->", pos_ + 4);
      pos_ = end == std::string_view::npos ? src_.size() : end + 3;
      return true;
    }
    if (pos_ + 1 < src_.size() && (src_[pos_ + 1] == '!' || src_[pos_ + 1] == '?')) {
      skip_past('>');
      return true;
    }
    if (pos_ + 2 < src_.size() && src_[pos_ + 1] == '/' && is_alpha(src_[pos_ + 2])) {
      pos_ += 2;
      const auto name = read_name();
      skip_past('>');
      out_.close(name);
      return true;
    }
    if (pos_ + 1 < src_.size() && is_alpha(src_[pos_ + 1])) {
      ++pos_;
      start_tag();
      return true;
    }
    return false;
  }

  void skip_past(char c) {
    const auto end = src_.find(c, pos_);
    pos_ = end == std::string_view::npos ? src_.size() : end + 1;
  }

  std::string read_name() {
    const auto begin = pos_;
    while (pos_ < src_.size() && !is_space(src_[pos_]) && src_[pos_] != '>' && src_[pos_] != '/') ++pos_;
    return lower(src_.substr(begin, pos_ - begin));
  }

  void start_tag() {
    auto name = read_name();
    std::vector<std::pair<std::string, std::string>> attrs;
    bool self_closing = false;
    while (pos_ < src_.size()) {
      while (pos_ < src_.size() && is_space(src_[pos_])) ++pos_;
      if (pos_ >= src_.size()) break;
      if (src_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (src_[pos_] == '/') {
        self_closing = pos_ + 1 < src_.size() && src_[pos_ + 1] == '>';
        ++pos_;
        continue;
      }
      const auto begin = pos_;
      while (pos_ < src_.size() && !is_space(src_[pos_]) && src_[pos_] != '=' && src_[pos_] != '>' &&
             src_[pos_] != '/')
        ++pos_;
      auto attr_name = lower(src_.substr(begin, pos_ - begin));
      if (attr_name.empty()) {
        ++pos_;
        continue;
      }
      while (pos_ < src_.size() && is_space(src_[pos_])) ++pos_;
      std::string value;
      if (pos_ < src_.size() && src_[pos_] == '=') {
        ++pos_;
        while (pos_ < src_.size() && is_space(src_[pos_])) ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'')) {
          const char quote = src_[pos_++];
          const auto end = src_.find(quote, pos_);
          const auto stop = end == std::string_view::npos ? src_.size() : end;
          value = decode_entities(src_.substr(pos_, stop - pos_));
          pos_ = stop == src_.size() ? stop : stop + 1;
        } else {
          const auto vbegin = pos_;
          while (pos_ < src_.size() && !is_space(src_[pos_]) && src_[pos_] != '>') ++pos_;
          value = decode_entities(src_.substr(vbegin, pos_ - vbegin));
        }
      }
      if (std::none_of(attrs.begin(), attrs.end(), [&](const auto& a) { return a.first == attr_name; }))
        attrs.emplace_back(std::move(attr_name), std::move(value));
    }

    const bool rcdata = one_of(name, kRcdataElements);
    const bool drop = one_of(name, kRawDropElements);
    out_.open(name, std::move(attrs), self_closing);
    if ((rcdata || drop) && !self_closing) {
      const auto content_end = find_close(name);
      if (rcdata) out_.text(decode_entities(src_.substr(pos_, content_end - pos_)));
      pos_ = content_end;
      if (pos_ < src_.size()) skip_past('>');
      out_.close(name);
    }
  }

  std::size_t find_close(std::string_view name) const {
    const std::string needle = "</" + std::string(name);
    for (auto p = src_.find('<', pos_); p != std::string_view::npos; p = src_.find('<', p + 1)) {
      if (starts_with_ci(src_, p, needle)) return p;
    }
    return src_.size();
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  TreeBuilder& out_;
};

constexpr std::array kInlineElements = {"a",    "abbr", "b",    "bdi",   "bdo",  "cite", "code", "data",
                                        "dfn",  "em",   "font", "i",     "kbd",  "mark", "q",    "s",
                                        "samp", "small", "span", "strong", "sub", "sup",  "time", "u",
                                        "var",  "label"};

void collect_text(const Node& node, std::string& out) {
  if (node.kind == Node::Kind::text) {
    out += node.text;
    return;
  }
  if (node.tag == "img") {
    if (auto alt = node.attr("alt")) {
      out += ' ';
      out += *alt;
      out += ' ';
    }
    return;
  }
  const bool inline_element = node.tag.empty() || one_of(node.tag, kInlineElements);
  if (!inline_element) out += ' ';
  for (const auto& child : node.children) collect_text(*child, out);
  if (!inline_element) out += ' ';
}

}  // namespace

std::optional<std::string_view> Node::attr(std::string_view name) const {
  for (const auto& [k, v] : attrs)
    if (k == name) return std::string_view(v);
  return std::nullopt;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) ||
        (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += len;
  }
  return true;
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out += text[i++];
      continue;
    }
    const auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += text[i++];
      continue;
    }
    const auto body = text.substr(i + 1, semi - i - 1);
    if (!body.empty() && body[0] == '#') {
      std::uint32_t cp = 0;
      bool ok = body.size() > 1;
      const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
      for (std::size_t k = hex ? 2 : 1; k < body.size() && ok; ++k) {
        const char c = body[k];
        int digit = -1;
        if (c >= '0' && c <= '9') digit = c - '0';
        else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        if (digit < 0) ok = false;
        else cp = std::min<std::uint32_t>(cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(digit), 0x110000);
      }
      if (ok && body.size() > (hex ? 2u : 1u)) {
        append_utf8(out, cp);
        i = semi + 1;
        continue;
      }
    } else if (auto it = named_entities().find(body); it != named_entities().end()) {
      append_utf8(out, it->second);
      i = semi + 1;
      continue;
    }
    out += text[i++];
  }
  return out;
}

std::string text_content(const Node& node) {
  std::string raw;
  collect_text(node, raw);
  std::string out;
  bool pending_space = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    // U+00A0 collapses like ordinary whitespace.
    const bool nbsp = static_cast<unsigned char>(c) == 0xC2 && i + 1 < raw.size() &&
                      static_cast<unsigned char>(raw[i + 1]) == 0xA0;
    if (is_space(c) || nbsp) {
      pending_space = true;
      if (nbsp) ++i;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

Document Document::parse(std::string_view html) {
  if (html.find('\0') != std::string_view::npos) throw ParseError("input contains NUL bytes");
  if (!is_valid_utf8(html)) throw ParseError("input is not valid UTF-8");
  Document doc;
  doc.root_ = std::make_unique<Node>();
  TreeBuilder builder(doc.root_.get());
  Tokenizer(html, builder).run();
  return doc;
}

}  // namespace flywheel::html
