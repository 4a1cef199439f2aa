// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/sim.hpp"

#include <cmath>
#include <complex>
#include <functional>

namespace amsizer::testing {

// Answers each job through a callback; `batch` counts run() calls from 1.
class StubSimulator final : public Simulator {
public:
  using Responder = std::function<SimOutcome(const SimJob& job, int batch)>;

  explicit StubSimulator(Responder r) : respond_(std::move(r)) {}

  std::vector<SimOutcome> run(std::span<const SimJob> jobs) override {
    ++batches_;
    std::vector<SimOutcome> out;
    for (const auto& j : jobs)
      out.push_back(respond_(j, batches_));
    return out;
  }

  [[nodiscard]] int batches() const { return batches_; }

private:
  Responder respond_;
  int batches_ = 0;
};

inline ComplexWaveform single_pole(double a0, double pole, const AcParams& ac = {}) {
  const int n = static_cast<int>(std::round(std::log10(ac.fstop / ac.fstart) * ac.points_per_decade)) + 1;
  Eigen::VectorXd f(n);
  Eigen::VectorXcd h(n);
  for (int i = 0; i < n; ++i) {
    f[i] = ac.fstart * std::pow(10.0, static_cast<double>(i) / ac.points_per_decade);
    h[i] = a0 / std::complex<double>(1.0, f[i] / pole);
  }
  return {"v(out)", f, h};
}

inline SimResult ac_result(const PlannedAnalysis& p, double a0, double pole) {
  SimResult r;
  r.planned = p;
  const auto& ac = std::get<AcParams>(p.analysis.params);
  r.waveforms["v(out)"] = single_pole(a0, pole, ac);
  return r;
}

inline SimFailure convergence_failure(const PlannedAnalysis& p) {
  return {FailureKind::ConvergenceFailure, p, "timestep too small", "doAnalyses: TRAN:  Timestep too small"};
}

} // namespace amsizer::testing
