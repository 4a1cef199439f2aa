// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/errors.hpp"
#include "amsizer/units.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amsizer {

class SyntaxError : public Error {
public:
  SyntaxError(int line, const std::string& what);
  [[nodiscard]] int line() const noexcept { return line_; }

private:
  int line_;
};

class UnknownElement : public Error {
public:
  using Error::Error;
};

class UnknownTunable : public Error {
public:
  using Error::Error;
};

class ConstraintViolation : public Error {
public:
  using Error::Error;
};

class OutOfBounds : public Error {
public:
  using Error::Error;
};

enum class ElementKind {
  Mosfet,
  Resistor,
  Capacitor,
  Inductor,
  VoltageSource,
  CurrentSource,
  Vcvs,
  Vccs,
  Cccs,
  Ccvs,
  Diode,
  Bjt,
  Subcircuit,
};

/// One element line of a netlist. All identifiers are lower case.
struct ElementCard {
  std::string name;
  std::vector<std::string> nodes;
  std::optional<std::string> model;
  /// Ordered parameters. Positional values use the keys "value" (R, C, L,
  /// controlled sources), "dc", "ac" and "acphase" (independent sources).
  std::vector<std::pair<std::string, PhysicalValue>> params;
  /// Source waveform function kept verbatim, e.g. "sin(0.9 0.8 1k)".
  std::string function;
  std::string comment;

  [[nodiscard]] ElementKind kind() const;
  [[nodiscard]] const PhysicalValue* param(std::string_view key) const;
  [[nodiscard]] PhysicalValue* param(std::string_view key);
  void set_param(std::string_view key, PhysicalValue value);
};

/// Structural equality: same names, nodes, models, parameter keys and
/// magnitudes (relative 1e-9), functions. Comments and token spelling are
/// ignored.
bool structurally_equal(const ElementCard& a, const ElementCard& b);

/// A line (or block of lines) the parser does not interpret: comments,
/// dot-commands, subcircuit bodies, unsupported element types.
struct Directive {
  std::string text;
  /// Number of element cards that precede this directive in the source.
  std::size_t position = 0;

  friend bool operator==(const Directive&, const Directive&) = default;
};

/// Parsed SPICE netlist. Immutable once built: patching produces a new doc.
class NetlistDoc {
public:
  NetlistDoc() = default;
  NetlistDoc(std::string title, std::vector<ElementCard> elements, std::vector<Directive> directives,
             std::uint64_t source_hash = 0);

  [[nodiscard]] const std::string& title() const noexcept { return title_; }
  [[nodiscard]] std::span<const ElementCard> elements() const noexcept { return elements_; }
  [[nodiscard]] std::span<const Directive> directives() const noexcept { return directives_; }
  [[nodiscard]] std::uint64_t source_hash() const noexcept { return source_hash_; }

  [[nodiscard]] const ElementCard* find(std::string_view name) const;
  [[nodiscard]] const ElementCard& at(std::string_view name) const;
  [[nodiscard]] bool has_node(std::string_view node) const;

  /// Copy with one element replaced (looked up by name).
  [[nodiscard]] NetlistDoc with_element(const ElementCard& card) const;

  friend bool structurally_equal(const NetlistDoc& a, const NetlistDoc& b);

private:
  std::string title_;
  std::vector<ElementCard> elements_;
  std::vector<Directive> directives_;
  std::uint64_t source_hash_ = 0;
};

bool structurally_equal(const NetlistDoc& a, const NetlistDoc& b);

NetlistDoc parse_netlist(std::string_view text);
NetlistDoc load_netlist(const std::string& path);
std::string serialize_netlist(const NetlistDoc& doc);
std::string serialize_card(const ElementCard& card);

// ---------------------------------------------------------------------------
// Tunable parameter surface

enum class ParamKind { W, L, DC, Value };

std::string_view to_string(ParamKind kind);
std::optional<ParamKind> parse_param_kind(std::string_view text);

struct Bounds {
  double min = 0.0;
  double max = 0.0;

  [[nodiscard]] bool contains(double v) const { return v >= min && v <= max; }
  [[nodiscard]] double clamp(double v) const { return v < min ? min : (v > max ? max : v); }
};

/// Devices that always share one value, e.g. a matched input pair.
struct SymmetryGroup {
  std::string id;
  std::vector<std::string> members;
};

struct TunablePolicy {
  std::vector<SymmetryGroup> groups;
  /// Voltage sources whose DC value may be tuned.
  std::vector<std::string> bias_sources;
  /// Passive elements (R, C) whose value may be tuned.
  std::vector<std::string> passives;
  /// Sources that must keep their baseline value (informational; every
  /// source that is not a bias source is frozen regardless).
  std::vector<std::string> supply_sources;
  Bounds width{0.4e-6, 1000e-6};
  Bounds length{0.18e-6, 10e-6};
  Bounds bias{0.0, 1.8};
  std::map<std::string, Bounds> value_bounds;
};

TunablePolicy policy_from_json(const nlohmann::json& j);
nlohmann::json policy_to_json(const TunablePolicy& p);

struct TunableParam {
  /// Group id for grouped devices, element name otherwise.
  std::string key;
  ParamKind param = ParamKind::W;
  PhysicalValue value;
  Bounds bounds;
  std::optional<std::string> group_id;
  std::vector<std::string> members;
};

/// One (group-or-element, parameter) slot; the patch addressing scheme.
struct ParamKey {
  std::string target;
  std::string param;

  auto operator<=>(const ParamKey&) const = default;
  bool operator==(const ParamKey&) const = default;
};

std::string to_string(const ParamKey& key);

/// A set of new values (SI magnitudes) and the reason for them.
struct ParamPatch {
  std::map<ParamKey, double> assignments;
  std::string rationale;

  [[nodiscard]] bool empty() const { return assignments.empty(); }
};

std::vector<TunableParam> extract_tunables(const NetlistDoc& doc, const TunablePolicy& policy);

const TunableParam* find_tunable(std::span<const TunableParam> tunables, const ParamKey& key);

/// Current magnitude of every tunable as held by `doc` (first group member).
std::map<ParamKey, double> current_values(const NetlistDoc& doc, std::span<const TunableParam> tunables);

NetlistDoc apply_patch(const NetlistDoc& doc, const ParamPatch& patch, const NetlistDoc& baseline,
                       std::span<const TunableParam> tunables);

struct ConstraintIssue {
  std::string element;
  std::string what;

  friend bool operator==(const ConstraintIssue&, const ConstraintIssue&) = default;
};

/// Supply-source values, model references and the element set must match the
/// baseline. Sources covered by a DC tunable may differ.
std::vector<ConstraintIssue> validate_constraints(const NetlistDoc& doc, const NetlistDoc& baseline,
                                                  std::span<const TunableParam> tunables = {});

} // namespace amsizer
