// SPDX-License-Identifier: Apache-2.0
// Analytic fixtures and slow reference evaluations for the metric extractors.
#pragma once

#include "amsizer/waveform.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace amsizer::testing {

inline constexpr double kPi = std::numbers::pi;

// H(f) = a0 / (1 + j f / p) on a log grid.
inline ComplexWaveform pole_response(double a0, double p, double f0, double f1, int per_decade) {
  const int n = static_cast<int>(std::round(std::log10(f1 / f0) * per_decade)) + 1;
  Eigen::VectorXd f(n);
  Eigen::VectorXcd h(n);
  for (int i = 0; i < n; ++i) {
    f[i] = f0 * std::pow(10.0, static_cast<double>(i) / per_decade);
    h[i] = a0 / std::complex<double>(1.0, f[i] / p);
  }
  return {"v(out)", f, h};
}

// Unity crossing of the single pole by bisection on the closed form.
inline double pole_unity_frequency(double a0, double p) {
  double lo = p;
  double hi = p * a0 * 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (std::abs(a0 / std::complex<double>(1.0, mid / p)) > 1.0 ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

inline double pole_phase_margin(double a0, double p) {
  return 180.0 - std::atan(pole_unity_frequency(a0, p) / p) * 180.0 / kPi;
}

// Uniformly sampled tone with harmonics a[k] at (k+1) f0.
inline RealWaveform tone(double f0, double periods, int samples, std::initializer_list<double> amplitudes,
                         double offset = 0.0) {
  Eigen::VectorXd t(samples);
  Eigen::VectorXd v(samples);
  const double stop = periods / f0;
  for (int i = 0; i < samples; ++i) {
    t[i] = stop * i / (samples - 1);
    double s = offset;
    int k = 1;
    for (double a : amplitudes)
      s += a * std::sin(2.0 * kPi * k++ * f0 * t[i]);
    v[i] = s;
  }
  return {"v(out)", t, v};
}

// THD from direct correlation with each harmonic over whole periods.
inline double brute_thd(const RealWaveform& w, double f0, int harmonics, int periods) {
  const double t1 = w.sweep[w.size() - 1];
  const double t0 = t1 - periods / f0;
  const int n = 20000;
  auto amp = [&](int k) {
    std::complex<double> acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = t0 + (t1 - t0) * i / n;
      acc += w.at(t) * std::exp(std::complex<double>(0.0, -2.0 * kPi * k * f0 * t));
    }
    return 2.0 * std::abs(acc) / n;
  };
  double h = 0.0;
  for (int k = 2; k <= harmonics; ++k)
    h += std::pow(amp(k), 2);
  return 20.0 * std::log10(std::sqrt(h) / amp(1));
}

} // namespace amsizer::testing
