// SPDX-License-Identifier: Apache-2.0
#include "amsizer/metrics.hpp"

#include "oracles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace amsizer;
using namespace amsizer::testing;

TEST_CASE("single pole: gain, unity-gain bandwidth and phase margin") {
  const auto h = pole_response(1000.0, 1e3, 1.0, 1e10, 20);
  CHECK(std::abs(dc_gain(h) - 60.0) < 0.01);
  const double fu = unity_gain_bandwidth(h);
  CHECK(std::abs(fu / 1e6 - 1.0) < 1e-3);
  CHECK(std::abs(fu - pole_unity_frequency(1000.0, 1e3)) / fu < 1e-3);
  const double pm = phase_margin(h);
  CHECK(std::abs(pm - 90.06) < 0.05);
  CHECK(std::abs(pm - pole_phase_margin(1000.0, 1e3)) < 0.05);
}

TEST_CASE("denser sampling converges on the closed form") {
  const auto h = pole_response(1000.0, 1e3, 1.0, 1e10, 400);
  CHECK(unity_gain_bandwidth(h) == doctest::Approx(pole_unity_frequency(1000.0, 1e3)).epsilon(1e-5));
  CHECK(phase_margin(h) == doctest::Approx(pole_phase_margin(1000.0, 1e3)).epsilon(1e-4));
}

TEST_CASE("two-pole phase margin against the closed form") {
  const int n = 241;
  Eigen::VectorXd f(n);
  Eigen::VectorXcd h(n);
  for (int i = 0; i < n; ++i) {
    f[i] = std::pow(10.0, i / 20.0);
    h[i] = 1e4 / (std::complex<double>(1.0, f[i] / 1e2) * std::complex<double>(1.0, f[i] / 2e6));
  }
  const ComplexWaveform w("v(out)", f, h);
  const double fu = unity_gain_bandwidth(w);
  // brute force: scan |H| on a fine grid
  double best = 0.0;
  for (double x = 1e5; x < 1e7; x *= 1.00001)
    if (std::abs(1e4 / (std::complex<double>(1.0, x / 1e2) * std::complex<double>(1.0, x / 2e6))) >= 1.0)
      best = x;
  CHECK(fu == doctest::Approx(best).epsilon(5e-3));
  const double exact = 180.0 - (std::atan(best / 1e2) + std::atan(best / 2e6)) * 180.0 / kPi;
  CHECK(phase_margin(w) == doctest::Approx(exact).epsilon(2e-3));
}

TEST_CASE("no unity crossing is reported, not guessed") {
  const auto h = pole_response(0.5, 1e3, 1.0, 1e9, 20);
  CHECK_THROWS_AS(unity_gain_bandwidth(h), MetricError);
  try {
    (void)unity_gain_bandwidth(h);
  } catch (const MetricError& e) {
    CHECK(e.kind() == MetricErrorKind::NoCrossing);
  }
}

TEST_CASE("THD of a tone with a 5% second harmonic") {
  const double f0 = 1e3;
  const auto w = tone(f0, 16.0, 16 * 512 + 1, {1.0, 0.05}, 0.9);
  ThdOptions o;
  o.window_periods = 8;
  o.samples = 4096;
  const double value = thd(w, f0, o);
  CHECK(std::abs(value - (-26.02)) < 0.05);
  CHECK(std::abs(value - brute_thd(w, f0, 5, 8)) < 0.05);
}

TEST_CASE("THD with several harmonics against direct correlation") {
  const double f0 = 1e3;
  const auto w = tone(f0, 16.0, 16 * 300 + 1, {0.8, 0.02, 0.01, 0.004});
  const double expected = 20.0 * std::log10(std::sqrt(0.02 * 0.02 + 0.01 * 0.01 + 0.004 * 0.004) / 0.8);
  CHECK(thd(w, f0) == doctest::Approx(expected).epsilon(1e-3));
  CHECK(thd(w, f0) == doctest::Approx(brute_thd(w, f0, 5, 8)).epsilon(1e-3));
}

TEST_CASE("THD rejects short records") {
  const auto w = tone(1e3, 4.0, 2001, {1.0});
  CHECK_THROWS_AS(thd(w, 1e3), MetricError);
}

TEST_CASE("CMRR of scalar gains") {
  CHECK(cmrr(1000.0, 0.1) == 80.0);
  CHECK(cmrr(std::complex<double>(0.0, 1000.0), std::complex<double>(-0.1, 0.0)) == doctest::Approx(80.0));
  CHECK(std::isinf(cmrr(1000.0, 0.0)));
  CHECK_THROWS_AS(cmrr(0.0, 0.1), MetricError);
  const auto dm = pole_response(1000.0, 1e3, 1.0, 1e6, 10);
  const auto cm = pole_response(0.1, 1e5, 1.0, 1e6, 10);
  CHECK(cmrr(dm, cm) == doctest::Approx(80.0).epsilon(1e-4));
}

TEST_CASE("operating-point power") {
  const std::map<std::string, double> op{{"i(vdd)", -2.5e-3}, {"v(out)", 0.9}};
  CHECK(quiescent_power(op, "vdd", 1.8) == doctest::Approx(4.5e-3));
  CHECK_THROWS_AS(quiescent_power(op, "vss", 1.8), MetricError);
}

TEST_CASE("follower transfer curve: offset and output range") {
  const int n = 1801;
  Eigen::VectorXd x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 1.8 * i / (n - 1);
    // follows with 2 mV offset between 0.1 V and 1.7 V, clipped outside
    y[i] = std::clamp(x[i] + 2e-3, 0.1, 1.7);
  }
  const RealWaveform w("v(out)", x, y);
  CHECK(input_offset(w, 0.9) == doctest::Approx(2e-3).epsilon(1e-6));
  CHECK(output_range(w) == doctest::Approx(1.6).epsilon(2e-3));
}

TEST_CASE("inverter threshold, delay and oscillation frequency") {
  const int n = 1801;
  Eigen::VectorXd x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 1.8 * i / (n - 1);
    y[i] = 1.8 / (1.0 + std::exp((x[i] - 0.8) / 0.02));
  }
  // Vout = Vin just above the midpoint of the logistic
  const double vth = switching_threshold(RealWaveform("v(out)", x, y));
  CHECK(vth > 0.8);
  CHECK(vth < 0.81);
  CHECK(std::abs(1.8 / (1.0 + std::exp((vth - 0.8) / 0.02)) - vth) < 2e-3);

  const int m = 4001;
  Eigen::VectorXd t(m);
  Eigen::VectorXd vin(m);
  Eigen::VectorXd vout(m);
  for (int i = 0; i < m; ++i) {
    t[i] = 4e-9 * i / (m - 1);
    const double phase = std::fmod(t[i], 1e-9);
    vin[i] = phase < 0.5e-9 ? 1.8 : 0.0;
    const double shifted = std::fmod(t[i] + 1e-9 - 30e-12, 1e-9);
    vout[i] = shifted < 0.5e-9 ? 0.0 : 1.8;
  }
  CHECK(propagation_delay(RealWaveform("v(in)", t, vin), RealWaveform("v(out)", t, vout), 1.8) ==
        doctest::Approx(30e-12).epsilon(0.05));

  Eigen::VectorXd s(m);
  for (int i = 0; i < m; ++i)
    s[i] = 0.9 + 0.9 * std::sin(2.0 * kPi * 1.25e9 * t[i]);
  CHECK(oscillation_frequency(RealWaveform("v(out)", t, s), 1.8) == doctest::Approx(1.25e9).epsilon(1e-3));
}

TEST_CASE("RC cutoff") {
  const double fc = 1.0 / (2.0 * kPi * 10e3 * 10e-9);
  const auto h = pole_response(1.0, fc, 1.0, 1e9, 40);
  CHECK(cutoff_frequency(h) == doctest::Approx(fc).epsilon(2e-3));
}

TEST_CASE("report JSON round trip with display units") {
  MetricReport r;
  r.set(MetricKind::Gain, 66.45, "AC");
  r.set(MetricKind::Ugbw, 50.12e6);
  r.set(MetricKind::Cmrr, std::numeric_limits<double>::infinity());
  r.absent[MetricKind::Thd] = {MetricErrorKind::SimulationFailed, "tran failed"};
  r.load = {10e-12, 1e3};
  const auto back = report_from_json(report_to_json(r));
  CHECK(*back.get(MetricKind::Gain) == doctest::Approx(66.45));
  CHECK(*back.get(MetricKind::Ugbw) == doctest::Approx(50.12e6));
  CHECK(std::isinf(*back.get(MetricKind::Cmrr)));
  CHECK(back.absent.at(MetricKind::Thd).reason == MetricErrorKind::SimulationFailed);

  const auto typed = report_from_json(nlohmann::json::parse(
      R"({"metrics":{"UGBW":{"value":19.95,"unit":"MHz"},"OFFSET":{"value":0.98,"unit":"mV"},"POWER":{"value":4.8,"unit":"mW"}}})"));
  CHECK(*typed.get(MetricKind::Ugbw) == doctest::Approx(19.95e6));
  CHECK(*typed.get(MetricKind::Offset) == doctest::Approx(0.98e-3));
  CHECK(*typed.get(MetricKind::Power) == doctest::Approx(4.8e-3));
  CHECK(format_metric(MetricKind::Ugbw, 19.95e6) == "19.95 MHz");
}
