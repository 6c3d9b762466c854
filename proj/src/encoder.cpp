#include "flywheel/encoder.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_map>
#include <vector>

#include "flywheel/html.hpp"
#include "flywheel/util.hpp"

namespace flywheel {

const TokenCounter& default_token_counter() {
  static const CharApproxCounter counter;
  return counter;
}

namespace {

using html::Node;

constexpr std::size_t kWrapColumn = 120;

const std::set<std::string, std::less<>> kSkippedElements{"head",   "script", "style",  "noscript", "template",
                                                          "svg",    "iframe", "object", "canvas",   "meta",
                                                          "link",   "title",  "map",    "audio",    "video",
                                                          "option", "datalist"};

const std::set<std::string, std::less<>> kBlockElements{
    "address", "article", "aside",   "blockquote", "body",   "center", "dd",     "details", "dialog", "div",
    "dl",      "dt",      "fieldset", "figcaption", "figure", "footer", "form",   "header",  "hgroup", "html",
    "legend",  "main",    "nav",     "ol",         "p",      "section", "summary", "table",  "tbody",  "thead",
    "tfoot",   "ul",      "caption", "menu"};

std::string collapse(std::string_view s) {
  std::string out;
  bool space = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    const bool nbsp = c == 0xC2 && i + 1 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0xA0;
    if (std::isspace(c) || nbsp) {
      space = true;
      if (nbsp) ++i;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(c);
  }
  return out;
}

std::string attr_or(const Node& n, std::string_view name, std::string_view fallback = {}) {
  auto v = n.attr(name);
  return v ? collapse(*v) : std::string(fallback);
}

bool is_hidden(const Node& n) {
  if (n.has_attr("hidden")) return true;
  if (auto aria = n.attr("aria-hidden"); aria && to_lower(trim(*aria)) == "true") return true;
  if (auto style = n.attr("style")) {
    std::string compact;
    for (char c : to_lower(*style))
      if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
    if (compact.find("display:none") != std::string::npos || compact.find("visibility:hidden") != std::string::npos)
      return true;
  }
  if (n.tag == "input" && to_lower(trim(n.attr("type").value_or(""))) == "hidden") return true;
  return false;
}

void label_text_into(const Node& n, std::string& out) {
  if (n.kind == Node::Kind::text) {
    out += n.text;
    return;
  }
  if (n.tag == "select" || n.tag == "textarea" || n.tag == "option" || n.tag == "script" || n.tag == "style") return;
  for (const auto& c : n.children) label_text_into(*c, out);
}

std::string label_text(const Node& n) {
  std::string raw;
  label_text_into(n, raw);
  return collapse(raw);
}

bool is_labelable(const Node& n) {
  return n.kind == Node::Kind::element && (n.tag == "input" || n.tag == "select" || n.tag == "textarea");
}

std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("0");
}

std::optional<double> to_number(std::string_view s) {
  s = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Appends " role" style words, skipping empty parts.
std::string join_words(std::initializer_list<std::string_view> parts) {
  std::string out;
  for (auto p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

class Encoder {
 public:
  explicit Encoder(const Node& root) {
    index_labels(root);
    mark_used_labels(root);
  }

  void run(const Node& root) {
    visit(root);
    flush();
  }

  std::vector<std::string> lines;
  std::vector<ElementInfo> elements;
  // Parallel to `lines`: element id introduced on that line, or -1.
  std::vector<std::int64_t> line_element;

 private:
  // --- label bookkeeping ---

  void index_labels(const Node& n) {
    if (n.is_element("label")) {
      if (auto target = n.attr("for")) label_for_.emplace(std::string(*target), &n);
    }
    for (const auto& c : n.children) index_labels(*c);
  }

  const Node* label_of(const Node& n) const {
    for (const Node* p = n.parent; p; p = p->parent)
      if (p->is_element("label")) return p;
    if (auto id = n.attr("id")) {
      if (auto it = label_for_.find(std::string(*id)); it != label_for_.end()) return it->second;
    }
    return nullptr;
  }

  void mark_used_labels(const Node& n) {
    if (is_labelable(n) && !is_hidden(n)) {
      if (const Node* label = label_of(n)) used_labels_.insert(label);
    }
    for (const auto& c : n.children) mark_used_labels(*c);
  }

  std::string control_label(const Node& n) const {
    if (const Node* label = label_of(n)) {
      auto text = label_text(*label);
      if (!text.empty()) return text;
    }
    for (auto key : {"aria-label", "title", "name"}) {
      auto v = attr_or(n, key);
      if (!v.empty()) return v;
    }
    return {};
  }

  // --- line assembly ---

  void emit(std::string line, std::int64_t element = -1) {
    lines.push_back(std::move(line));
    line_element.push_back(element);
  }

  void flush() {
    auto text = std::string(trim(inline_));
    inline_.clear();
    if (text.empty()) return;
    std::string first_prefix = std::move(prefix_);
    prefix_.clear();
    const bool heading = !first_prefix.empty() && first_prefix[0] == '#';
    if (heading) {
      emit(first_prefix + text);
      return;
    }
    bool first = true;
    std::string_view rest = text;
    while (!rest.empty()) {
      const std::string_view lead = first ? std::string_view(first_prefix) : std::string_view{};
      std::size_t room = kWrapColumn > lead.size() ? kWrapColumn - lead.size() : 1;
      std::size_t cut = rest.size();
      if (rest.size() > room) {
        cut = rest.rfind(' ', room);
        if (cut == std::string_view::npos || cut == 0) cut = std::min(rest.find(' '), rest.size());
      }
      emit(std::string(lead) + std::string(rest.substr(0, cut)));
      rest = trim(rest.substr(cut));
      first = false;
    }
  }

  void append_text(std::string_view raw) {
    auto text = collapse(raw);
    if (text.empty()) {
      if (!raw.empty() && !inline_.empty() && inline_.back() != ' ') inline_ += ' ';
      return;
    }
    const bool lead_space = !raw.empty() && std::isspace(static_cast<unsigned char>(raw.front()));
    const bool trail_space = !raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()));
    if (lead_space && !inline_.empty() && inline_.back() != ' ') inline_ += ' ';
    inline_ += text;
    if (trail_space) inline_ += ' ';
  }

  void element_line(ElementInfo info, const std::string& rendered_tail) {
    flush();
    prefix_.clear();
    info.element_id = static_cast<std::int64_t>(elements.size());
    emit("[id: " + std::to_string(info.element_id) + "] " + rendered_tail, info.element_id);
    elements.push_back(std::move(info));
  }

  // --- element handlers ---

  std::optional<std::pair<ElementInfo, std::string>> classify(const Node& n) const {
    ElementInfo info;
    const std::string role_attr = to_lower(trim(n.attr("role").value_or("")));

    auto clickable_label = [&]() {
      auto text = collapse(html::text_content(n));
      for (auto key : {"aria-label", "title", "value"}) {
        if (!text.empty()) break;
        text = attr_or(n, key);
      }
      return text;
    };

    auto simple = [&](ElementRole role, std::string label, std::string_view word) {
      info.role = role;
      info.label = label;
      return std::make_pair(info, join_words({label, word}));
    };

    if (n.tag == "a" && (n.has_attr("href") || role_attr == "link")) {
      if (auto href = n.attr("href")) info.metadata["href"] = std::string(*href);
      return simple(ElementRole::link, clickable_label(), "link");
    }
    if (n.tag == "button" || role_attr == "button" || role_attr == "menuitem" || role_attr == "tab") {
      return simple(ElementRole::button, clickable_label(), "button");
    }
    if (n.tag == "input") {
      const std::string type = to_lower(trim(n.attr("type").value_or("text")));
      if (type == "submit" || type == "button" || type == "reset" || type == "image") {
        auto label = attr_or(n, "value");
        for (auto key : {"aria-label", "alt", "title"})
          if (label.empty()) label = attr_or(n, key);
        if (label.empty()) label = type == "reset" ? "Reset" : "Submit";
        return simple(ElementRole::button, label, "button");
      }
      if (type == "checkbox" || type == "radio") return checkbox(n, type, n.has_attr("checked"));
      if (type == "range") return range(n);
      if (type == "file") {
        info.metadata["type"] = "file";
        return simple(ElementRole::other, control_label(n), "file input");
      }
      return text_input(n, attr_or(n, "value"), type);
    }
    if (n.tag == "textarea") return text_input(n, collapse(html::text_content(n)), "textarea");
    if (n.tag == "select") return select(n);
    if (role_attr == "link") return simple(ElementRole::link, clickable_label(), "link");
    if (role_attr == "checkbox" || role_attr == "switch") {
      auto label = clickable_label();
      info.role = ElementRole::checkbox;
      const bool checked = to_lower(n.attr("aria-checked").value_or("false")) == "true";
      info.label = label;
      info.current_value = checked ? "true" : "false";
      info.metadata["type"] = "checkbox";
      return std::make_pair(info, "\"" + label + "\" (" + (checked ? "checked checkbox" : "checkbox") + ")");
    }
    if (role_attr == "textbox" || to_lower(n.attr("contenteditable").value_or("false")) == "true")
      return text_input(n, collapse(html::text_content(n)), "textbox");
    if (n.has_attr("onclick")) return simple(ElementRole::button, clickable_label(), "button");
    if (n.tag == "img") {
      auto alt = attr_or(n, "alt");
      if (alt.empty()) return std::nullopt;
      if (auto src = n.attr("src")) info.metadata["src"] = std::string(*src);
      return simple(ElementRole::image, alt, "image");
    }
    return std::nullopt;
  }

  std::pair<ElementInfo, std::string> text_input(const Node& n, std::string value, const std::string& type) const {
    ElementInfo info;
    info.role = ElementRole::text_input;
    info.label = control_label(n);
    info.metadata["type"] = type;
    auto placeholder = attr_or(n, "placeholder");
    if (!placeholder.empty()) info.metadata["placeholder"] = placeholder;
    if (!value.empty()) info.current_value = value;
    const auto& shown = value.empty() ? placeholder : value;
    return {info, "\"" + shown + "\" (" + join_words({info.label, "text input"}) + ")"};
  }

  std::pair<ElementInfo, std::string> range(const Node& n) const {
    ElementInfo info;
    info.role = ElementRole::range_slider;
    info.label = control_label(n);
    const auto min = attr_or(n, "min", "0");
    const auto max = attr_or(n, "max", "100");
    const auto step = attr_or(n, "step", "1");
    auto value = attr_or(n, "value");
    if (value.empty()) {
      const auto lo = to_number(min).value_or(0), hi = to_number(max).value_or(100);
      value = format_number(hi < lo ? lo : lo + (hi - lo) / 2);
    }
    info.current_value = value;
    info.metadata = {{"min", min}, {"max", max}, {"step", step}};
    const auto valuetext = attr_or(n, "aria-valuetext");
    if (!valuetext.empty()) info.metadata["valuetext"] = valuetext;
    const auto shown = valuetext.empty() ? value : valuetext + " (" + value + ")";
    const auto spec = "range slider min: " + min + " max: " + max + " step: " + step;
    return {info, "\"" + shown + "\" (" + join_words({info.label, spec}) + ")"};
  }

  std::pair<ElementInfo, std::string> select(const Node& n) const {
    ElementInfo info;
    info.role = ElementRole::select;
    info.label = control_label(n);
    std::vector<std::string> options;
    std::optional<std::string> selected;
    collect_options(n, options, selected);
    if (!selected && !options.empty()) selected = options.front();
    std::string joined;
    for (const auto& o : options) joined += (joined.empty() ? "" : ", ") + o;
    info.metadata["options"] = joined;
    info.current_value = selected;
    return {info, "\"" + selected.value_or("") + "\" (" + join_words({info.label, "select from: " + joined}) + ")"};
  }

  static void collect_options(const Node& n, std::vector<std::string>& out, std::optional<std::string>& selected) {
    for (const auto& c : n.children) {
      if (c->is_element("option")) {
        auto text = collapse(html::text_content(*c));
        if (text.empty()) text = attr_or(*c, "label", attr_or(*c, "value"));
        if (c->has_attr("selected") && !selected) selected = text;
        out.push_back(std::move(text));
      } else if (c->kind == Node::Kind::element) {
        collect_options(*c, out, selected);
      }
    }
  }

  std::pair<ElementInfo, std::string> checkbox(const Node& n, const std::string& type, bool checked) const {
    ElementInfo info;
    info.role = ElementRole::checkbox;
    info.label = control_label(n);
    info.current_value = checked ? "true" : "false";
    info.metadata["type"] = type;
    return {info, "\"" + info.label + "\" (" + (checked ? "checked checkbox" : "checkbox") + ")"};
  }

  // --- traversal ---

  void visit(const Node& n) {
    if (n.kind == Node::Kind::text) {
      if (in_pre_ > 0) {
        pre_text(n.text);
      } else if (!suppress_text_) {
        append_text(n.text);
      }
      return;
    }
    if (!n.tag.empty() && (kSkippedElements.contains(n.tag) || is_hidden(n))) return;

    if (auto element = classify(n)) {
      element_line(std::move(element->first), element->second);
      return;
    }

    const auto& tag = n.tag;
    if (tag.size() == 2 && tag[0] == 'h' && tag[1] >= '1' && tag[1] <= '6') {
      flush();
      if (!lines.empty() && !lines.back().empty()) emit("");
      prefix_ = std::string(static_cast<std::size_t>(tag[1] - '0'), '#') + " ";
      visit_children(n);
      flush();
      prefix_.clear();
      emit("");
      return;
    }
    if (tag == "br") {
      flush();
      return;
    }
    if (tag == "hr") {
      flush();
      emit("---");
      return;
    }
    if (tag == "pre") {
      flush();
      ++in_pre_;
      visit_children(n);
      --in_pre_;
      flush_pre();
      return;
    }
    if (tag == "li") {
      flush();
      prefix_ = std::string(2 * static_cast<std::size_t>(std::max(list_depth_ - 1, 0)), ' ') + "* ";
      visit_children(n);
      flush();
      prefix_.clear();
      return;
    }
    if (tag == "ul" || tag == "ol" || tag == "menu") {
      flush();
      ++list_depth_;
      visit_children(n);
      --list_depth_;
      flush();
      return;
    }
    if (tag == "tr") {
      flush();
      visit_children(n);
      flush();
      return;
    }
    if (tag == "td" || tag == "th") {
      if (!trim(inline_).empty()) {
        inline_ = std::string(trim(inline_));
        inline_ += " | ";
      }
      visit_children(n);
      return;
    }
    if (tag == "label" && used_labels_.contains(&n)) {
      const bool saved = suppress_text_;
      suppress_text_ = true;
      visit_children(n);
      suppress_text_ = saved;
      return;
    }
    if (kBlockElements.contains(tag)) {
      flush();
      visit_children(n);
      flush();
      return;
    }
    visit_children(n);
  }

  void visit_children(const Node& n) {
    for (const auto& c : n.children) visit(*c);
  }

  void pre_text(const std::string& text) { pre_buffer_ += text; }

  void flush_pre() {
    std::string_view rest = pre_buffer_;
    while (!rest.empty()) {
      const auto nl = rest.find('\n');
      auto line = rest.substr(0, nl);
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
      if (!trim(line).empty()) emit(std::string(line));
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
    pre_buffer_.clear();
  }

  std::unordered_map<std::string, const Node*> label_for_;
  std::set<const Node*> used_labels_;
  std::string inline_;
  std::string prefix_;
  std::string pre_buffer_;
  int list_depth_ = 0;
  int in_pre_ = 0;
  bool suppress_text_ = false;
};

}  // namespace

Observation encode(const DomSnapshot& snapshot, const EncoderConfig& config) {
  if (config.observation_token_budget < kMinObservationBudget)
    throw std::invalid_argument("observation_token_budget must be >= 64");

  html::Document doc;
  try {
    doc = html::Document::parse(snapshot.html);
  } catch (const html::ParseError& e) {
    throw EncodeError(e.what());
  }

  Encoder enc(doc.root());
  enc.run(doc.root());

  // Drop blank lines at the edges and collapse runs of blank lines.
  std::vector<std::string> lines{"URL: " + snapshot.url};
  std::vector<std::int64_t> line_element{-1};
  for (std::size_t i = 0; i < enc.lines.size(); ++i) {
    const bool blank = enc.lines[i].empty();
    if (blank && (lines.back().empty() || lines.size() == 1)) continue;
    lines.push_back(enc.lines[i]);
    line_element.push_back(enc.line_element[i]);
  }
  while (lines.size() > 1 && lines.back().empty()) {
    lines.pop_back();
    line_element.pop_back();
  }

  const auto& counter = config.counter();
  const auto budget = config.observation_token_budget;

  auto join = [](const std::vector<std::string>& ls, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out += '\n';
      out += ls[i];
    }
    return out;
  };

  Observation obs;
  obs.url = snapshot.url;
  obs.captured_at = snapshot.captured_at;
  std::size_t kept = lines.size();
  obs.markdown = join(lines, kept);
  if (counter.count(obs.markdown) > budget) {
    // Largest prefix of whole lines that still fits together with the marker.
    std::size_t lo = 0, hi = lines.size();
    auto fits = [&](std::size_t n) {
      auto text = join(lines, n);
      if (n) text += '\n';
      text += kTruncationMarker;
      return counter.count(text) <= budget;
    };
    while (lo < hi) {
      const auto mid = (lo + hi + 1) / 2;
      if (fits(mid)) lo = mid;
      else hi = mid - 1;
    }
    kept = lo;
    // Avoid ending on a blank separator line.
    while (kept > 0 && lines[kept - 1].empty()) --kept;
    obs.markdown = join(lines, kept);
    if (kept) obs.markdown += '\n';
    obs.markdown += kTruncationMarker;
  }
  for (std::size_t i = 0; i < kept; ++i) {
    if (line_element[i] >= 0) {
      const auto& info = enc.elements[static_cast<std::size_t>(line_element[i])];
      obs.elements.emplace(info.element_id, info);
    }
  }
  obs.token_count = counter.count(obs.markdown);
  return obs;
}

}  // namespace flywheel
