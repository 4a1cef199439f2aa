// SPDX-License-Identifier: Apache-2.0
#include "amsizer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

namespace amsizer {

namespace {

void require_points(Eigen::Index n, Eigen::Index need, std::string_view what) {
  if (n < need)
    throw MetricError(MetricErrorKind::InsufficientRecord,
                      fmt::format("{} needs at least {} points, got {}", what, need, n));
}

Eigen::VectorXd magnitude_db(const ComplexWaveform& h) { return 20.0 * h.values.cwiseAbs().array().log10(); }

/// Unwrapped phase in degrees, shifted by the multiple of 180 nearest the
/// first sample so inverting stages read like non-inverting ones.
Eigen::VectorXd anchored_phase(const ComplexWaveform& h) {
  const Eigen::Index n = h.size();
  Eigen::VectorXd ph(n);
  double offset = 0.0;
  double prev = std::arg(h.values[0]);
  const double start = std::round(prev / std::numbers::pi) * std::numbers::pi;
  ph[0] = prev - start;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double a = std::arg(h.values[i]);
    double d = a - prev;
    if (d > std::numbers::pi)
      offset -= 2.0 * std::numbers::pi;
    else if (d < -std::numbers::pi)
      offset += 2.0 * std::numbers::pi;
    prev = a;
    ph[i] = a + offset - start;
  }
  return ph * (180.0 / std::numbers::pi);
}

struct Crossing {
  Eigen::Index k; // bracketing interval [k, k+1]
  double t;       // fraction within it
};

/// First index where `y` falls from above `level` to at-or-below it.
std::optional<Crossing> first_fall(const Eigen::VectorXd& y, double level) {
  for (Eigen::Index k = 0; k + 1 < y.size(); ++k)
    if (y[k] > level && y[k + 1] <= level)
      return Crossing{k, (y[k] - level) / (y[k] - y[k + 1])};
  return std::nullopt;
}

double log_interp(const Eigen::VectorXd& f, const Crossing& c) {
  const double lf = std::log10(f[c.k]) + c.t * (std::log10(f[c.k + 1]) - std::log10(f[c.k]));
  return std::pow(10.0, lf);
}

Crossing ugbw_crossing(const ComplexWaveform& h) {
  require_points(h.size(), 2, "UGBW");
  if (!(std::abs(h.values[0]) > 1.0))
    throw MetricError(MetricErrorKind::NoCrossing,
                      fmt::format("|H(f_min)| = {:.4g} is not above unity", std::abs(h.values[0])));
  const auto c = first_fall(magnitude_db(h), 0.0);
  if (!c)
    throw MetricError(MetricErrorKind::NoCrossing, "gain never falls to 0 dB within the sweep");
  return *c;
}

/// Times where `y` crosses `level`, with direction (+1 rising, -1 falling).
std::vector<std::pair<double, int>> crossings(const RealWaveform& w, double level) {
  std::vector<std::pair<double, int>> out;
  for (Eigen::Index k = 0; k + 1 < w.size(); ++k) {
    const double a = w.values[k] - level;
    const double b = w.values[k + 1] - level;
    if ((a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)) {
      const double t = a / (a - b);
      out.emplace_back(w.sweep[k] + t * (w.sweep[k + 1] - w.sweep[k]), b > a ? 1 : -1);
    }
  }
  return out;
}

} // namespace

std::string_view to_string(MetricErrorKind kind) {
  switch (kind) {
  case MetricErrorKind::NoCrossing: return "NoCrossing";
  case MetricErrorKind::DegenerateInput: return "DegenerateInput";
  case MetricErrorKind::InsufficientRecord: return "InsufficientRecord";
  case MetricErrorKind::EmptyRange: return "EmptyRange";
  case MetricErrorKind::MissingBranch: return "MissingBranch";
  case MetricErrorKind::SimulationFailed: return "SimulationFailed";
  }
  return "";
}

double dc_gain(const ComplexWaveform& h) {
  require_points(h.size(), 1, "gain");
  const double m = std::abs(h.values[0]);
  if (!(m > 0.0))
    throw MetricError(MetricErrorKind::DegenerateInput, "|H(f_min)| is zero");
  return 20.0 * std::log10(m);
}

double unity_gain_bandwidth(const ComplexWaveform& h) { return log_interp(h.sweep, ugbw_crossing(h)); }

double phase_margin(const ComplexWaveform& h) {
  const auto c = ugbw_crossing(h);
  const Eigen::VectorXd ph = anchored_phase(h);
  return 180.0 + ph[c.k] + c.t * (ph[c.k + 1] - ph[c.k]);
}

double quiescent_power(const std::map<std::string, double>& op, std::string_view supply_source, double supply_v) {
  const auto key = fmt::format("i({})", supply_source);
  const auto it = op.find(key);
  if (it == op.end())
    throw MetricError(MetricErrorKind::MissingBranch, fmt::format("operating point lacks {}", key));
  return supply_v * std::abs(it->second);
}

double cmrr(std::complex<double> adm, std::complex<double> acm) {
  const double dm = std::abs(adm);
  const double cm = std::abs(acm);
  if (!(dm > 0.0))
    throw MetricError(MetricErrorKind::DegenerateInput, "differential gain is zero");
  if (cm == 0.0)
    return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(dm / cm);
}

double cmrr(const ComplexWaveform& dm, const ComplexWaveform& cm) {
  require_points(dm.size(), 1, "CMRR");
  require_points(cm.size(), 1, "CMRR");
  if (std::abs(dm.sweep[0] - cm.sweep[0]) > 1e-9 * std::abs(dm.sweep[0]))
    throw MetricError(MetricErrorKind::DegenerateInput, "CMRR inputs do not share a sweep grid");
  return cmrr(dm.values[0], cm.values[0]);
}

Eigen::VectorXd resample_periods(const RealWaveform& tran, double f0, int periods, int samples) {
  const double t_end = tran.sweep[tran.size() - 1];
  const double span = periods / f0;
  const double t0 = t_end - span;
  const double dt = span / samples;
  Eigen::VectorXd out(samples);
  Eigen::Index k = 0;
  for (int i = 0; i < samples; ++i) {
    const double t = t0 + dt * i;
    while (k + 2 < tran.size() && tran.sweep[k + 1] < t)
      ++k;
    const double a = tran.sweep[k];
    const double b = tran.sweep[k + 1];
    const double u = std::clamp((t - a) / (b - a), 0.0, 1.0);
    out[i] = tran.values[k] + u * (tran.values[k + 1] - tran.values[k]);
  }
  return out;
}

double thd(const RealWaveform& tran, double f0, const ThdOptions& opts) {
  if (!(f0 > 0.0) || opts.harmonics < 2 || opts.window_periods < 1 || opts.samples < 2)
    throw MetricError(MetricErrorKind::DegenerateInput, "invalid THD settings");
  if ((opts.samples & (opts.samples - 1)) != 0)
    throw MetricError(MetricErrorKind::DegenerateInput, "THD sample count must be a power of two");
  require_points(tran.size(), 2, "THD");
  const double record = (tran.sweep[tran.size() - 1] - tran.sweep[0]) * f0;
  if (record < opts.min_periods * (1.0 - 1e-9) || record < opts.window_periods * (1.0 - 1e-9))
    throw MetricError(MetricErrorKind::InsufficientRecord,
                      fmt::format("record holds {:.3g} periods, need {}", record, opts.min_periods));
  if (opts.harmonics * opts.window_periods >= opts.samples / 2)
    throw MetricError(MetricErrorKind::DegenerateInput, "harmonics exceed the Nyquist limit of the window");

  const Eigen::VectorXd y = resample_periods(tran, f0, opts.window_periods, opts.samples);
  Eigen::FFT<double> fft;
  Eigen::VectorXcd spectrum;
  fft.fwd(spectrum, y);
  const double fundamental = std::abs(spectrum[opts.window_periods]);
  if (!(fundamental > 0.0))
    throw MetricError(MetricErrorKind::DegenerateInput, "no energy at the fundamental");
  double harm = 0.0;
  for (int k = 2; k <= opts.harmonics; ++k)
    harm += std::norm(spectrum[k * opts.window_periods]);
  const double ratio = std::max(std::sqrt(harm) / fundamental, 1e-30);
  return 20.0 * std::log10(ratio);
}

double input_offset(const RealWaveform& dc, double vcm) {
  require_points(dc.size(), 2, "offset");
  if (!dc.covers(vcm))
    throw MetricError(MetricErrorKind::InsufficientRecord, fmt::format("DC sweep does not cover {} V", vcm));
  return std::abs(dc.at(vcm) - vcm);
}

double output_range(const RealWaveform& dc, double slope_threshold) {
  const Eigen::Index n = dc.size();
  require_points(n, 3, "output range");
  Eigen::VectorXd slope(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index a = i == 0 ? 0 : i - 1;
    const Eigen::Index b = i == n - 1 ? n - 1 : i + 1;
    slope[i] = (dc.values[b] - dc.values[a]) / (dc.sweep[b] - dc.sweep[a]);
  }
  double best = -1.0;
  Eigen::Index start = -1;
  for (Eigen::Index i = 0; i <= n; ++i) {
    const bool ok = i < n && slope[i] >= slope_threshold;
    if (ok && start < 0)
      start = i;
    if (!ok && start >= 0) {
      const auto seg = dc.values.segment(start, i - start);
      best = std::max(best, seg.maxCoeff() - seg.minCoeff());
      start = -1;
    }
  }
  if (best < 0.0)
    throw MetricError(MetricErrorKind::EmptyRange,
                      fmt::format("no point of the transfer curve reaches slope {}", slope_threshold));
  return best;
}

double switching_threshold(const RealWaveform& dc) {
  require_points(dc.size(), 2, "switching threshold");
  RealWaveform diff(dc.name, dc.sweep, dc.values - dc.sweep);
  const auto xs = crossings(diff, 0.0);
  if (xs.empty())
    throw MetricError(MetricErrorKind::NoCrossing, "transfer curve never crosses Vout = Vin");
  return xs.front().first;
}

double propagation_delay(const RealWaveform& in, const RealWaveform& out, double vdd) {
  const auto ins = crossings(in, vdd / 2.0);
  const auto outs = crossings(out, vdd / 2.0);
  double total = 0.0;
  int count = 0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < ins.size(); ++i) {
    const double t_in = ins[i].first;
    const double t_next = i + 1 < ins.size() ? ins[i + 1].first : std::numeric_limits<double>::infinity();
    while (j < outs.size() && outs[j].first < t_in)
      ++j;
    if (j < outs.size() && outs[j].first < t_next) {
      total += outs[j].first - t_in;
      ++count;
    }
  }
  if (count == 0)
    throw MetricError(MetricErrorKind::NoCrossing, "output never responds to an input transition");
  return total / count;
}

double oscillation_frequency(const RealWaveform& out, double vdd) {
  std::vector<double> rising;
  for (const auto& [t, dir] : crossings(out, vdd / 2.0))
    if (dir > 0)
      rising.push_back(t);
  if (rising.size() < 3)
    throw MetricError(MetricErrorKind::NoCrossing,
                      fmt::format("only {} rising crossings; the circuit does not oscillate", rising.size()));
  return static_cast<double>(rising.size() - 2) / (rising.back() - rising[1]);
}

double cutoff_frequency(const ComplexWaveform& h) {
  require_points(h.size(), 2, "cutoff");
  const Eigen::VectorXd db = magnitude_db(h);
  if (!std::isfinite(db[0]))
    throw MetricError(MetricErrorKind::DegenerateInput, "|H(f_min)| is zero");
  const auto c = first_fall(db, db[0] - 10.0 * std::log10(2.0));
  if (!c)
    throw MetricError(MetricErrorKind::NoCrossing, "response never falls 3 dB within the sweep");
  return log_interp(h.sweep, *c);
}

} // namespace amsizer
