// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/errors.hpp"
#include "amsizer/metric_kind.hpp"
#include "amsizer/sim.hpp"
#include "amsizer/waveform.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amsizer {

enum class MetricErrorKind {
  NoCrossing,
  DegenerateInput,
  InsufficientRecord,
  EmptyRange,
  MissingBranch,
  SimulationFailed,
};

std::string_view to_string(MetricErrorKind kind);

class MetricError : public Error {
public:
  MetricError(MetricErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  [[nodiscard]] MetricErrorKind kind() const noexcept { return kind_; }

private:
  MetricErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Extraction procedures. AC inputs are Vout/Vin transfer functions; sweeps
// are ascending.

/// 20 log10 |H(f_min)|.
double dc_gain(const ComplexWaveform& h);

/// First downward 0 dB crossing, interpolated linearly in dB over log10 f.
double unity_gain_bandwidth(const ComplexWaveform& h);

/// 180 + phase at the UGBW, with the unwrapped phase anchored to 0 at f_min.
double phase_margin(const ComplexWaveform& h);

/// supply_v * |I(supply)| from an operating point.
double quiescent_power(const std::map<std::string, double>& op, std::string_view supply_source, double supply_v);

/// 20 log10(|Adm(f_min)| / |Acm(f_min)|); +inf when Acm vanishes.
double cmrr(const ComplexWaveform& dm, const ComplexWaveform& cm);
double cmrr(std::complex<double> adm, std::complex<double> acm);

/// The last `window_periods` periods are resampled onto `samples` uniform
/// points (a power of two) before the FFT.
struct ThdOptions {
  int harmonics = 5;
  int window_periods = 8;
  int samples = 4096;
  /// Minimum record length in periods.
  double min_periods = 10.0;
};

/// Total harmonic distortion in dB of a transient record with fundamental f0.
double thd(const RealWaveform& tran, double f0, const ThdOptions& opts = {});

/// Uniform resampling of the last `periods` periods into `samples` points.
Eigen::VectorXd resample_periods(const RealWaveform& tran, double f0, int periods, int samples);

/// |Vout(vcm) - vcm| of a unity-gain DC transfer curve.
double input_offset(const RealWaveform& dc, double vcm = 0.9);

/// Output span of the widest contiguous region where dVout/dVin >= threshold.
double output_range(const RealWaveform& dc, double slope_threshold = 0.9);

/// Input voltage where the transfer curve crosses Vout = Vin.
double switching_threshold(const RealWaveform& dc);

/// Mean delay between 50% crossings of input and output.
double propagation_delay(const RealWaveform& in, const RealWaveform& out, double vdd);

/// Frequency from rising mid-supply crossings, ignoring the first period.
double oscillation_frequency(const RealWaveform& out, double vdd);

/// First frequency where |H| falls 3.0103 dB below |H(f_min)|.
double cutoff_frequency(const ComplexWaveform& h);

// ---------------------------------------------------------------------------
// Reports

struct MetricValue {
  MetricKind kind = MetricKind::Gain;
  double value = 0.0;
  std::string measured_at;
};

struct MetricAbsence {
  MetricErrorKind reason = MetricErrorKind::NoCrossing;
  std::string detail;
};

struct MetricReport {
  std::map<MetricKind, MetricValue> values;
  std::map<MetricKind, MetricAbsence> absent;
  LoadCondition load;
  std::string design_point_id;

  [[nodiscard]] std::optional<double> get(MetricKind kind) const;
  void set(MetricKind kind, double value, std::string measured_at = {});
};

nlohmann::json report_to_json(const MetricReport& r);
/// Accepts SI values or values tagged with a display unit ("MHz", "mV"...).
MetricReport report_from_json(const nlohmann::json& j);

/// Multiplier from a unit label to SI ("MHz" -> 1e6, "mV" -> 1e-3, "dB" -> 1).
std::optional<double> unit_scale(std::string_view unit);

/// Human-readable value in display units, e.g. "45.12 MHz".
std::string format_metric(MetricKind kind, double si_value);

class IncompleteInputs : public Error {
public:
  IncompleteInputs(std::vector<PlannedAnalysis> missing, const std::string& what)
      : Error(what), missing_(std::move(missing)) {}
  [[nodiscard]] const std::vector<PlannedAnalysis>& missing() const noexcept { return missing_; }

private:
  std::vector<PlannedAnalysis> missing_;
};

/// Computes `metrics` from simulation results. Every analysis the plan needs
/// must appear in `results` or `failures`; metrics whose analysis failed are
/// reported absent with reason SimulationFailed.
MetricReport assemble_report(std::span<const SimResult> results, std::span<const MetricKind> metrics,
                             const TestbenchConfig& tb, const HarnessSet& harnesses = HarnessSet::opamp_default(),
                             std::span<const SimFailure> failures = {});

} // namespace amsizer
