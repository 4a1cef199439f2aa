// SPDX-License-Identifier: Apache-2.0
#include "amsizer/metric_kind.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace amsizer {

namespace {

struct KindInfo {
  MetricKind kind;
  std::string_view id;
  std::string_view alias;
  std::string_view si;
  DisplayUnit display;
};

constexpr std::array<KindInfo, 12> kInfo{{
    {MetricKind::Gain, "GAIN_DB", "gain", "dB", {"dB", 1.0}},
    {MetricKind::Ugbw, "UGBW_HZ", "ugbw", "Hz", {"MHz", 1e-6}},
    {MetricKind::PhaseMargin, "PM_DEG", "pm", "deg", {"deg", 1.0}},
    {MetricKind::Power, "POWER_W", "power", "W", {"mW", 1e3}},
    {MetricKind::Cmrr, "CMRR_DB", "cmrr", "dB", {"dB", 1.0}},
    {MetricKind::Thd, "THD_DB", "thd", "dB", {"dB", 1.0}},
    {MetricKind::Offset, "OFFSET_V", "offset", "V", {"mV", 1e3}},
    {MetricKind::OutputRange, "OUTPUT_RANGE_V", "range", "V", {"V", 1.0}},
    {MetricKind::SwitchingThreshold, "SWITCHING_THRESHOLD_V", "vth", "V", {"V", 1.0}},
    {MetricKind::PropagationDelay, "PROPAGATION_DELAY_S", "delay", "s", {"ps", 1e12}},
    {MetricKind::OscillationFrequency, "OSCILLATION_FREQUENCY_HZ", "fosc", "Hz", {"MHz", 1e-6}},
    {MetricKind::CutoffFrequency, "CUTOFF_FREQUENCY_HZ", "fc", "Hz", {"kHz", 1e-3}},
}};

const KindInfo& info(MetricKind kind) {
  return *std::find_if(kInfo.begin(), kInfo.end(), [&](const KindInfo& i) { return i.kind == kind; });
}

} // namespace

std::string_view to_string(MetricKind kind) { return info(kind).id; }

std::optional<MetricKind> parse_metric_kind(std::string_view text) {
  std::string upper(text);
  std::string lower(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& i : kInfo) {
    if (i.id == upper || i.alias == lower)
      return i.kind;
    // "GAIN" for "GAIN_DB", "OUTPUT_RANGE" for "OUTPUT_RANGE_V"
    const auto cut = i.id.rfind('_');
    if (cut != std::string_view::npos && i.id.substr(0, cut) == upper)
      return i.kind;
  }
  return std::nullopt;
}

std::string_view si_unit(MetricKind kind) { return info(kind).si; }

DisplayUnit display_unit(MetricKind kind) { return info(kind).display; }

} // namespace amsizer
