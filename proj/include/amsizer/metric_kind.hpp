// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace amsizer {

/// Measured quantities. The first eight characterise an amplifier; the rest
/// cover the small digital and passive benchmarks.
enum class MetricKind {
  Gain,
  Ugbw,
  PhaseMargin,
  Power,
  Cmrr,
  Thd,
  Offset,
  OutputRange,
  SwitchingThreshold,
  PropagationDelay,
  OscillationFrequency,
  CutoffFrequency,
};

inline constexpr std::array<MetricKind, 8> kAmplifierMetrics{
    MetricKind::Gain,  MetricKind::Ugbw, MetricKind::PhaseMargin, MetricKind::Power,
    MetricKind::Cmrr,  MetricKind::Thd,  MetricKind::Offset,      MetricKind::OutputRange,
};

inline constexpr std::array<MetricKind, 12> kAllMetrics{
    MetricKind::Gain,
    MetricKind::Ugbw,
    MetricKind::PhaseMargin,
    MetricKind::Power,
    MetricKind::Cmrr,
    MetricKind::Thd,
    MetricKind::Offset,
    MetricKind::OutputRange,
    MetricKind::SwitchingThreshold,
    MetricKind::PropagationDelay,
    MetricKind::OscillationFrequency,
    MetricKind::CutoffFrequency,
};

/// Stable identifier, e.g. "GAIN_DB", "UGBW_HZ".
std::string_view to_string(MetricKind kind);
/// Accepts the identifiers of to_string plus short aliases ("gain", "pm").
std::optional<MetricKind> parse_metric_kind(std::string_view text);

/// Unit of the stored (SI) value: "dB", "Hz", "deg", "W", "V", "s".
std::string_view si_unit(MetricKind kind);

/// Display convention for reports: value * scale in `unit` (MHz, mW, mV...).
struct DisplayUnit {
  std::string_view unit;
  double scale;
};
DisplayUnit display_unit(MetricKind kind);

} // namespace amsizer
