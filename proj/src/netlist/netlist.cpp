// SPDX-License-Identifier: Apache-2.0
#include "amsizer/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace amsizer {

SyntaxError::SyntaxError(int line, const std::string& what)
    : Error(fmt::format("line {}: {}", line, what)), line_(line) {}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool close_enough(double a, double b) {
  if (a == b)
    return true;
  if (std::isnan(a) || std::isnan(b))
    return false;
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

std::optional<ElementKind> kind_of_letter(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
  case 'm': return ElementKind::Mosfet;
  case 'r': return ElementKind::Resistor;
  case 'c': return ElementKind::Capacitor;
  case 'l': return ElementKind::Inductor;
  case 'v': return ElementKind::VoltageSource;
  case 'i': return ElementKind::CurrentSource;
  case 'e': return ElementKind::Vcvs;
  case 'g': return ElementKind::Vccs;
  case 'f': return ElementKind::Cccs;
  case 'h': return ElementKind::Ccvs;
  case 'd': return ElementKind::Diode;
  case 'q': return ElementKind::Bjt;
  case 'x': return ElementKind::Subcircuit;
  default: return std::nullopt;
  }
}

Unit unit_for(ElementKind kind, std::string_view key) {
  if (kind == ElementKind::Mosfet && (key == "w" || key == "l"))
    return Unit::Meter;
  if (key == "value") {
    switch (kind) {
    case ElementKind::Resistor: return Unit::Ohm;
    case ElementKind::Capacitor: return Unit::Farad;
    case ElementKind::Inductor: return Unit::Henry;
    default: return Unit::Dimensionless;
    }
  }
  if (key == "dc" || key == "ac") {
    if (kind == ElementKind::VoltageSource)
      return Unit::Volt;
    if (kind == ElementKind::CurrentSource)
      return Unit::Ampere;
  }
  if (key == "acphase")
    return Unit::Degree;
  return Unit::Dimensionless;
}

// Splits an element line into tokens. Parenthesised groups stay inside one
// token ("sin(0 1 1k)"), a function name separated from its "(" is merged,
// and "key = value" is normalised to "key=value".
std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> tokens;
  std::string cur;
  int depth = 0;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : line) {
    if (depth > 0) {
      if (ch == '(')
        ++depth;
      else if (ch == ')')
        --depth;
      if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
        if (!cur.empty() && cur.back() != ' ' && cur.back() != '(')
          cur.push_back(' ');
      } else {
        if (ch == ')' && !cur.empty() && cur.back() == ' ')
          cur.pop_back();
        cur.push_back(ch);
      }
      continue;
    }
    if (ch == '(') {
      if (cur.empty() && !tokens.empty() && std::isalpha(static_cast<unsigned char>(tokens.back().front())) &&
          tokens.back().find('=') == std::string::npos) {
        cur = tokens.back();
        tokens.pop_back();
      }
      ++depth;
      cur.push_back(ch);
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else if (ch == '=') {
      if (cur.empty() && !tokens.empty()) {
        cur = tokens.back();
        tokens.pop_back();
      }
      cur.push_back('=');
    } else {
      if (cur.empty() && !tokens.empty() && tokens.back().back() == '=') {
        cur = tokens.back();
        tokens.pop_back();
      }
      cur.push_back(ch);
    }
  }
  flush();
  return tokens;
}

PhysicalValue make_value(std::string_view token, ElementKind kind, std::string_view key, int line) {
  std::string suffix;
  auto v = parse_spice_number(token, &suffix);
  if (!v || !std::isfinite(*v))
    throw SyntaxError(line, fmt::format("cannot parse value '{}' for '{}'", token, key));
  PhysicalValue pv;
  pv.magnitude = *v;
  pv.unit = unit_for(kind, key);
  pv.suffix = suffix;
  pv.text = std::string(token);
  return pv;
}

bool is_number(std::string_view token) { return parse_spice_number(token).has_value(); }

ElementCard parse_element(std::string_view raw, int line) {
  std::string body(raw);
  std::string comment;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == ';' || (body[i] == '$' && i > 0 && std::isspace(static_cast<unsigned char>(body[i - 1])))) {
      comment = std::string(trim(std::string_view(body).substr(i + 1)));
      body.resize(i);
      break;
    }
  }
  auto tokens = tokenize(lower(body));
  ElementCard card;
  card.name = tokens.front();
  card.comment = comment;
  const ElementKind kind = *kind_of_letter(card.name.front());

  std::vector<std::string> positional;
  std::vector<std::pair<std::string, std::string>> named;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    auto eq = t.find('=');
    if (eq != std::string::npos && t.find('(') > eq) {
      if (eq == 0 || eq + 1 == t.size())
        throw SyntaxError(line, fmt::format("malformed parameter '{}'", t));
      named.emplace_back(t.substr(0, eq), t.substr(eq + 1));
    } else {
      positional.push_back(t);
    }
  }

  auto take_value = [&](std::string_view key, std::string_view token) {
    card.params.emplace_back(std::string(key), make_value(token, kind, key, line));
  };

  switch (kind) {
  case ElementKind::Mosfet:
    if (positional.size() != 5)
      throw SyntaxError(line, fmt::format("MOSFET '{}' needs 4 nodes and a model, got {} fields", card.name,
                                          positional.size()));
    card.nodes.assign(positional.begin(), positional.begin() + 4);
    card.model = positional[4];
    break;
  case ElementKind::Resistor:
  case ElementKind::Capacitor:
  case ElementKind::Inductor:
    if (positional.size() < 3 || positional.size() > 4)
      throw SyntaxError(line, fmt::format("'{}' needs 2 nodes and a value", card.name));
    card.nodes.assign(positional.begin(), positional.begin() + 2);
    take_value("value", positional[2]);
    if (positional.size() == 4)
      card.model = positional[3];
    break;
  case ElementKind::VoltageSource:
  case ElementKind::CurrentSource: {
    if (positional.size() < 2)
      throw SyntaxError(line, fmt::format("source '{}' needs 2 nodes", card.name));
    card.nodes.assign(positional.begin(), positional.begin() + 2);
    for (std::size_t i = 2; i < positional.size(); ++i) {
      const auto& t = positional[i];
      if (t == "dc") {
        if (i + 1 >= positional.size())
          throw SyntaxError(line, "dc without value");
        take_value("dc", positional[++i]);
      } else if (t == "ac") {
        if (i + 1 < positional.size() && is_number(positional[i + 1])) {
          take_value("ac", positional[++i]);
          if (i + 1 < positional.size() && is_number(positional[i + 1]))
            take_value("acphase", positional[++i]);
        } else {
          card.params.emplace_back("ac", make_value("1", kind, "ac", line));
        }
      } else if (t.find('(') != std::string::npos) {
        if (!card.function.empty())
          card.function.push_back(' ');
        card.function += t;
      } else if (is_number(t) && card.param("dc") == nullptr && i == 2) {
        take_value("dc", t);
      } else {
        throw SyntaxError(line, fmt::format("unexpected token '{}' in source '{}'", t, card.name));
      }
    }
    break;
  }
  case ElementKind::Vcvs:
  case ElementKind::Vccs:
    if (positional.size() < 5)
      throw SyntaxError(line, fmt::format("'{}' needs 4 nodes and a gain", card.name));
    card.nodes.assign(positional.begin(), positional.begin() + 4);
    if (positional.size() == 5 && is_number(positional[4])) {
      take_value("value", positional[4]);
    } else {
      for (std::size_t i = 4; i < positional.size(); ++i)
        card.function += (i > 4 ? " " : "") + positional[i];
    }
    break;
  case ElementKind::Cccs:
  case ElementKind::Ccvs:
    if (positional.size() != 4)
      throw SyntaxError(line, fmt::format("'{}' needs 2 nodes, a control source and a gain", card.name));
    card.nodes.assign(positional.begin(), positional.begin() + 2);
    card.model = positional[2];
    take_value("value", positional[3]);
    break;
  case ElementKind::Diode:
    if (positional.size() != 3)
      throw SyntaxError(line, fmt::format("diode '{}' needs 2 nodes and a model", card.name));
    card.nodes.assign(positional.begin(), positional.begin() + 2);
    card.model = positional[2];
    break;
  case ElementKind::Bjt:
    if (positional.size() != 4 && positional.size() != 5)
      throw SyntaxError(line, fmt::format("BJT '{}' needs 3 or 4 nodes and a model", card.name));
    card.nodes.assign(positional.begin(), positional.end() - 1);
    card.model = positional.back();
    break;
  case ElementKind::Subcircuit:
    if (positional.size() < 2)
      throw SyntaxError(line, fmt::format("instance '{}' needs nodes and a subcircuit name", card.name));
    card.nodes.assign(positional.begin(), positional.end() - 1);
    card.model = positional.back();
    break;
  }
  for (const auto& [k, v] : named)
    take_value(k, v);
  return card;
}

struct LogicalLine {
  std::string text;
  int line = 0;
};

bool starts_with_ci(std::string_view text, std::string_view prefix) {
  return text.size() >= prefix.size() && lower(text.substr(0, prefix.size())) == prefix;
}

} // namespace

// ---------------------------------------------------------------------------

ElementKind ElementCard::kind() const { return *kind_of_letter(name.front()); }

const PhysicalValue* ElementCard::param(std::string_view key) const {
  for (const auto& [k, v] : params)
    if (k == key)
      return &v;
  return nullptr;
}

PhysicalValue* ElementCard::param(std::string_view key) {
  for (auto& [k, v] : params)
    if (k == key)
      return &v;
  return nullptr;
}

void ElementCard::set_param(std::string_view key, PhysicalValue value) {
  if (auto* p = param(key)) {
    *p = std::move(value);
    return;
  }
  value.unit = unit_for(kind(), key);
  params.emplace_back(std::string(key), std::move(value));
}

bool structurally_equal(const ElementCard& a, const ElementCard& b) {
  if (a.name != b.name || a.nodes != b.nodes || a.model != b.model || a.function != b.function ||
      a.params.size() != b.params.size())
    return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].first != b.params[i].first)
      return false;
    if (!close_enough(a.params[i].second.magnitude, b.params[i].second.magnitude))
      return false;
  }
  return true;
}

NetlistDoc::NetlistDoc(std::string title, std::vector<ElementCard> elements, std::vector<Directive> directives,
                       std::uint64_t source_hash)
    : title_(std::move(title)), elements_(std::move(elements)), directives_(std::move(directives)),
      source_hash_(source_hash) {}

const ElementCard* NetlistDoc::find(std::string_view name) const {
  const auto key = lower(name);
  for (const auto& e : elements_)
    if (e.name == key)
      return &e;
  return nullptr;
}

const ElementCard& NetlistDoc::at(std::string_view name) const {
  if (const auto* e = find(name))
    return *e;
  throw UnknownElement(fmt::format("no element named '{}'", name));
}

bool NetlistDoc::has_node(std::string_view node) const {
  const auto key = lower(node);
  for (const auto& e : elements_)
    if (std::find(e.nodes.begin(), e.nodes.end(), key) != e.nodes.end())
      return true;
  return false;
}

NetlistDoc NetlistDoc::with_element(const ElementCard& card) const {
  NetlistDoc out = *this;
  for (auto& e : out.elements_) {
    if (e.name == card.name) {
      e = card;
      return out;
    }
  }
  throw UnknownElement(fmt::format("no element named '{}'", card.name));
}

bool structurally_equal(const NetlistDoc& a, const NetlistDoc& b) {
  if (trim(a.title_) != trim(b.title_) || a.directives_ != b.directives_ ||
      a.elements_.size() != b.elements_.size())
    return false;
  for (std::size_t i = 0; i < a.elements_.size(); ++i)
    if (!structurally_equal(a.elements_[i], b.elements_[i]))
      return false;
  return true;
}

NetlistDoc parse_netlist(std::string_view text) {
  if (trim(text).empty())
    throw SyntaxError(1, "empty netlist");

  std::vector<std::string> lines;
  {
    std::string cur;
    for (char ch : text) {
      if (ch == '\n') {
        if (!cur.empty() && cur.back() == '\r')
          cur.pop_back();
        lines.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty())
      lines.push_back(std::move(cur));
  }

  std::string title(trim(lines.front()));
  std::vector<ElementCard> elements;
  std::vector<Directive> directives;
  std::vector<int> element_lines;

  // Each pending item is either an element logical line or a directive.
  std::optional<LogicalLine> pending_element;
  std::optional<std::size_t> open_directive; // index into directives accepting "+" lines
  std::string block_end;                     // ".ends"/".endc" while inside a verbatim block

  auto flush_element = [&] {
    if (!pending_element)
      return;
    auto card = parse_element(pending_element->text, pending_element->line);
    for (std::size_t i = 0; i < elements.size(); ++i)
      if (elements[i].name == card.name)
        throw SyntaxError(pending_element->line,
                          fmt::format("duplicate element '{}' (first defined on line {})", card.name,
                                      element_lines[i]));
    elements.push_back(std::move(card));
    element_lines.push_back(pending_element->line);
    pending_element.reset();
  };

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    const std::string& raw = lines[i];
    const std::string_view t = trim(raw);

    if (!block_end.empty()) {
      directives.back().text += "\n" + raw;
      if (starts_with_ci(t, block_end))
        block_end.clear();
      continue;
    }
    if (!t.empty() && t.front() == '+') {
      if (pending_element) {
        pending_element->text += " ";
        pending_element->text += t.substr(1);
      } else if (open_directive) {
        directives[*open_directive].text += "\n" + raw;
      } else {
        throw SyntaxError(lineno, "continuation line without a preceding card");
      }
      continue;
    }
    flush_element();
    open_directive.reset();

    if (t.empty() || t.front() == '*' || t.front() == '.' || !kind_of_letter(t.front())) {
      directives.push_back({raw, elements.size()});
      if (!t.empty() && t.front() == '.') {
        open_directive = directives.size() - 1;
        if (starts_with_ci(t, ".subckt"))
          block_end = ".ends";
        else if (starts_with_ci(t, ".control"))
          block_end = ".endc";
      } else if (!t.empty() && t.front() != '*') {
        open_directive = directives.size() - 1; // unsupported element kept verbatim
      }
      continue;
    }
    pending_element = LogicalLine{std::string(t), lineno};
  }
  flush_element();

  return NetlistDoc(std::move(title), std::move(elements), std::move(directives), fnv1a(text));
}

NetlistDoc load_netlist(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw IoError(fmt::format("cannot open netlist '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_netlist(ss.str());
}

namespace {

std::string value_text(const PhysicalValue& v) {
  return v.text.empty() ? format_spice_number(v.magnitude, v.suffix) : v.text;
}

} // namespace

std::string serialize_card(const ElementCard& card) {
  std::string out = card.name;
  for (const auto& n : card.nodes)
    out += " " + n;
  const auto kind = card.kind();
  const bool value_first = kind == ElementKind::Resistor || kind == ElementKind::Capacitor ||
                           kind == ElementKind::Inductor;
  const bool source = kind == ElementKind::VoltageSource || kind == ElementKind::CurrentSource;

  if (card.model && !value_first)
    out += " " + *card.model;
  std::vector<std::string_view> done;
  if (source) {
    if (const auto* dc = card.param("dc"))
      out += " dc " + value_text(*dc);
    if (const auto* ac = card.param("ac")) {
      out += " ac " + value_text(*ac);
      if (const auto* ph = card.param("acphase"))
        out += " " + value_text(*ph);
    }
    done = {"dc", "ac", "acphase"};
    if (!card.function.empty())
      out += " " + card.function;
  } else if (const auto* v = card.param("value")) {
    out += " " + value_text(*v);
    done = {"value"};
  }
  if (card.model && value_first)
    out += " " + *card.model;
  if (!source && !card.function.empty())
    out += " " + card.function;
  for (const auto& [k, v] : card.params) {
    if (std::find(done.begin(), done.end(), k) != done.end())
      continue;
    out += " " + k + "=" + value_text(v);
  }
  if (!card.comment.empty())
    out += " ; " + card.comment;
  return out;
}

std::string serialize_netlist(const NetlistDoc& doc) {
  std::string out = doc.title() + "\n";
  const auto elements = doc.elements();
  const auto directives = doc.directives();
  std::size_t d = 0;
  for (std::size_t i = 0; i <= elements.size(); ++i) {
    while (d < directives.size() && directives[d].position <= i)
      out += directives[d++].text + "\n";
    if (i < elements.size())
      out += serialize_card(elements[i]) + "\n";
  }
  return out;
}

} // namespace amsizer
