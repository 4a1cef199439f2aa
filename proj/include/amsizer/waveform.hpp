// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/errors.hpp"

#include <algorithm>
#include <complex>
#include <string>
#include <utility>
#include <variant>

#include <Eigen/Core>

namespace amsizer {

/// Samples of one signal over a sweep variable (time, frequency or a swept
/// source value). The sweep is strictly monotonic.
template <typename Scalar>
struct BasicWaveform {
  using SweepVector = Eigen::VectorXd;
  using ValueVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::string name;
  SweepVector sweep;
  ValueVector values;

  BasicWaveform() = default;
  BasicWaveform(std::string n, SweepVector x, ValueVector y)
      : name(std::move(n)), sweep(std::move(x)), values(std::move(y)) {}

  [[nodiscard]] Eigen::Index size() const { return sweep.size(); }

  [[nodiscard]] bool increasing() const { return sweep.size() < 2 || sweep[1] > sweep[0]; }

  /// Throws Error unless lengths match and the sweep is strictly monotonic.
  void validate() const {
    if (values.size() != sweep.size())
      throw Error("waveform '" + name + "': sweep and value lengths differ");
    const bool up = increasing();
    for (Eigen::Index i = 1; i < sweep.size(); ++i)
      if (up ? !(sweep[i] > sweep[i - 1]) : !(sweep[i] < sweep[i - 1]))
        throw Error("waveform '" + name + "': sweep is not strictly monotonic");
  }

  /// Linear interpolation at x. Outside the sweep the end samples are returned.
  [[nodiscard]] Scalar at(double x) const {
    const Eigen::Index n = sweep.size();
    if (n == 0)
      throw Error("waveform '" + name + "' is empty");
    const bool up = increasing();
    auto before = [&](double a, double b) { return up ? a <= b : a >= b; };
    if (before(x, sweep[0]))
      return values[0];
    if (before(sweep[n - 1], x))
      return values[n - 1];
    Eigen::Index lo = 0;
    Eigen::Index hi = n - 1;
    while (hi - lo > 1) {
      const Eigen::Index mid = (lo + hi) / 2;
      if (before(sweep[mid], x))
        lo = mid;
      else
        hi = mid;
    }
    const double t = (x - sweep[lo]) / (sweep[hi] - sweep[lo]);
    return values[lo] + (values[hi] - values[lo]) * t;
  }

  [[nodiscard]] bool covers(double x) const {
    if (sweep.size() == 0)
      return false;
    const double lo = std::min(sweep[0], sweep[sweep.size() - 1]);
    const double hi = std::max(sweep[0], sweep[sweep.size() - 1]);
    return x >= lo && x <= hi;
  }
};

using RealWaveform = BasicWaveform<double>;
using ComplexWaveform = BasicWaveform<std::complex<double>>;
using Waveform = std::variant<RealWaveform, ComplexWaveform>;

inline const std::string& waveform_name(const Waveform& w) {
  return std::visit([](const auto& x) -> const std::string& { return x.name; }, w);
}

} // namespace amsizer
