// SPDX-License-Identifier: Apache-2.0
#include "amsizer/bench.hpp"
#include "amsizer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

// Empty for NaN so spreadsheets treat it as missing.
std::string cell(double v) {
  if (std::isnan(v))
    return {};
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.9g}", v);
}

std::string metric_column(MetricKind k) {
  const auto d = display_unit(k);
  return d.unit.empty() ? std::string(metric_label(k)) : fmt::format("{}_{}", metric_label(k), d.unit);
}

double in_display(MetricKind k, double si) { return si * display_unit(k).scale; }

} // namespace

void write_campaign_csv(const CampaignSummary& s, const std::vector<MetricKind>& metrics, const fs::path& path) {
  auto out = open_out(path);
  out << "attempt,iterations,success,status";
  for (auto m : metrics)
    out << ',' << metric_column(m);
  out << '\n';
  for (const auto& a : s.attempts) {
    out << a.attempt_index << ',' << a.iterations << ',' << (a.success ? 1 : 0) << ','
        << to_string(a.outcome.status);
    const auto& recs = a.outcome.history.records;
    for (auto m : metrics) {
      out << ',';
      if (!recs.empty())
        if (const auto v = recs.back().report.get(m))
          out << cell(in_display(m, *v));
    }
    out << '\n';
  }
  if (!out)
    throw IoError(fmt::format("cannot write '{}'", path.string()));
}

nlohmann::json campaign_to_json(const CampaignSummary& s) {
  nlohmann::json j;
  j["circuit"] = s.circuit;
  j["engine"] = s.engine;
  j["attempts"] = s.attempts.size();
  j["successes"] = s.successes();
  j["success_rate"] = s.success_rate;
  j["iterations_mean"] = s.iteration_mean ? nlohmann::json(*s.iteration_mean) : nlohmann::json();
  j["iterations_min"] = s.iteration_min ? nlohmann::json(*s.iteration_min) : nlohmann::json();
  j["iterations_max"] = s.iteration_max ? nlohmann::json(*s.iteration_max) : nlohmann::json();
  j["runs"] = nlohmann::json::array();
  for (const auto& a : s.attempts)
    j["runs"].push_back({{"attempt", a.attempt_index},
                         {"iterations", a.iterations},
                         {"success", a.success},
                         {"status", to_string(a.outcome.status)}});
  return j;
}

void write_trace_csv(const ContextHistory& h, const fs::path& path) {
  const auto metrics = h.group.metrics();
  auto out = open_out(path);
  out << "iteration,pass";
  for (auto m : metrics)
    out << ',' << metric_column(m);
  out << '\n';
  for (const auto& r : h.records) {
    out << r.index << ',' << (r.check.overall_pass ? 1 : 0);
    for (auto m : metrics) {
      out << ',';
      if (const auto v = r.report.get(m))
        out << cell(in_display(m, *v));
    }
    out << '\n';
  }
  if (!out)
    throw IoError(fmt::format("cannot write '{}'", path.string()));
}

std::vector<fs::path> write_variation(const VariationStudy& study, const fs::path& dir) {
  std::vector<fs::path> written;
  for (const auto& c : study.curves) {
    const auto path = dir / (c.name + ".csv");
    auto out = open_out(path);
    out << c.x_label << ",nominal";
    for (std::size_t s = 0; s < c.samples.size(); ++s)
      out << ",s" << s + 1;
    out << ",min,max,mean\n";
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      out << cell(c.x[i]) << ',' << cell(c.nominal[i]);
      double lo = INFINITY, hi = -INFINITY, sum = 0.0;
      int n = 0;
      for (const auto& row : c.samples) {
        out << ',' << cell(row[i]);
        if (std::isfinite(row[i])) {
          lo = std::min(lo, row[i]);
          hi = std::max(hi, row[i]);
          sum += row[i];
          ++n;
        }
      }
      if (n > 0)
        out << ',' << cell(lo) << ',' << cell(hi) << ',' << cell(sum / n) << '\n';
      else
        out << ",,,\n";
    }
    written.push_back(path);
  }

  const auto path = dir / "samples.csv";
  auto out = open_out(path);
  out << "sample";
  if (!study.samples.empty())
    for (const auto& [k, _] : study.samples.front().values)
      out << ',' << to_string(k);
  out << ",failures\n";
  for (const auto& s : study.samples) {
    out << s.index;
    for (const auto& [_, v] : s.values)
      out << ',' << cell(v);
    out << ',' << s.failures.size() << '\n';
  }
  written.push_back(path);
  return written;
}

} // namespace amsizer
