// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace amsizer {

enum class Unit {
  Meter,
  Volt,
  Ampere,
  Watt,
  Hertz,
  Farad,
  Ohm,
  Henry,
  Second,
  Decibel,
  Degree,
  Dimensionless,
};

std::string_view unit_symbol(Unit unit);

/// A magnitude in SI base units plus the way it was written.
///
/// `text` holds the original (lower-cased) token when the value came from a
/// netlist and has not been changed since; `suffix` is the SPICE scale suffix
/// used in that token ("u", "meg", "" ...). Serialization prefers `text` and
/// falls back to formatting `magnitude` with `suffix`.
struct PhysicalValue {
  double magnitude = 0.0;
  Unit unit = Unit::Dimensionless;
  std::string suffix;
  std::string text;

  /// Same value with a new magnitude; keeps the suffix style, drops the text.
  [[nodiscard]] PhysicalValue with_magnitude(double m) const;
};

/// Parses a SPICE number such as "10u", "0.18U", "1.8", "10e-6", "1meg",
/// "2.2kohm" or "10µ". Trailing letters after the scale suffix are ignored,
/// as SPICE does. Returns nullopt when the token does not start with a number.
std::optional<double> parse_spice_number(std::string_view token, std::string* suffix = nullptr);

/// Multiplier of a (lower-case) scale suffix; 1.0 for "".
double suffix_scale(std::string_view suffix);

/// Formats `value` using the given scale suffix, e.g. (53e-6, "u") -> "53u".
std::string format_spice_number(double value, std::string_view suffix);

} // namespace amsizer
