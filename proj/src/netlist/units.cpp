// SPDX-License-Identifier: Apache-2.0
#include "amsizer/units.hpp"

#include <array>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

namespace amsizer {

namespace {

struct ScaleSuffix {
  std::string_view name;
  double scale;
};

// Longest names first so "meg" and "mil" win over "m".
constexpr std::array<ScaleSuffix, 11> kSuffixes{{
    {"meg", 1e6},
    {"mil", 25.4e-6},
    {"t", 1e12},
    {"g", 1e9},
    {"k", 1e3},
    {"m", 1e-3},
    {"u", 1e-6},
    {"n", 1e-9},
    {"p", 1e-12},
    {"f", 1e-15},
    {"a", 1e-18},
}};

bool starts_with_ci(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size())
    return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(text[i])) != prefix[i])
      return false;
  return true;
}

} // namespace

std::string_view unit_symbol(Unit unit) {
  switch (unit) {
  case Unit::Meter: return "m";
  case Unit::Volt: return "V";
  case Unit::Ampere: return "A";
  case Unit::Watt: return "W";
  case Unit::Hertz: return "Hz";
  case Unit::Farad: return "F";
  case Unit::Ohm: return "Ohm";
  case Unit::Henry: return "H";
  case Unit::Second: return "s";
  case Unit::Decibel: return "dB";
  case Unit::Degree: return "deg";
  case Unit::Dimensionless: return "";
  }
  return "";
}

PhysicalValue PhysicalValue::with_magnitude(double m) const {
  PhysicalValue out = *this;
  out.magnitude = m;
  out.text.clear();
  return out;
}

double suffix_scale(std::string_view suffix) {
  for (const auto& s : kSuffixes)
    if (s.name == suffix)
      return s.scale;
  return 1.0;
}

std::optional<double> parse_spice_number(std::string_view token, std::string* suffix) {
  if (token.empty())
    return std::nullopt;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (*first == '+')
    ++first;
  double mantissa = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, mantissa);
  if (ec != std::errc{})
    return std::nullopt;

  std::string_view rest(ptr, static_cast<std::size_t>(last - ptr));
  std::string found;
  double scale = 1.0;
  if (rest.starts_with("\xC2\xB5")) { // micro sign
    found = "u";
    scale = 1e-6;
  } else if (!rest.empty()) {
    for (const auto& s : kSuffixes) {
      if (starts_with_ci(rest, s.name)) {
        found = std::string(s.name);
        scale = s.scale;
        break;
      }
    }
    if (found.empty() && !std::isalpha(static_cast<unsigned char>(rest.front())))
      return std::nullopt;
  }
  if (suffix)
    *suffix = found;
  return mantissa * scale;
}

std::string format_spice_number(double value, std::string_view suffix) {
  const double scaled = value / suffix_scale(suffix);
  return fmt::format("{:.12g}{}", scaled, suffix);
}

} // namespace amsizer
