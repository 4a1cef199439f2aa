// SPDX-License-Identifier: Apache-2.0
#include "amsizer/sim.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>

#include <fmt/format.h>

namespace amsizer {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::string normalize_name(std::string_view name, std::string_view type) {
  std::string n = lower(name);
  if (const auto pos = n.find("#branch"); pos != std::string::npos)
    return "i(" + n.substr(0, pos) + ")";
  if (n.find('(') == std::string::npos && lower(type) == "voltage")
    return "v(" + n + ")";
  return n;
}

class Cursor {
public:
  explicit Cursor(std::string_view text) : text_(text) {}

  [[nodiscard]] bool done() const { return pos_ >= text_.size(); }
  [[nodiscard]] std::size_t pos() const { return pos_; }

  std::string_view line() {
    const auto end = text_.find('\n', pos_);
    const auto stop = end == std::string_view::npos ? text_.size() : end;
    auto out = text_.substr(pos_, stop - pos_);
    pos_ = end == std::string_view::npos ? text_.size() : end + 1;
    if (!out.empty() && out.back() == '\r')
      out.remove_suffix(1);
    return out;
  }

  std::string_view token() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    const auto start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    return text_.substr(start, pos_ - start);
  }

  [[nodiscard]] std::string_view rest() const { return text_.substr(pos_); }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

double to_double(std::string_view tok, std::size_t offset) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && *first == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseFailure(offset, fmt::format("malformed number '{}'", tok));
  return v;
}

std::size_t header_count(std::string_view value, std::size_t offset, std::string_view what) {
  std::size_t n = 0;
  const auto t = trim(value);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    throw ParseFailure(offset, fmt::format("malformed {} '{}'", what, t));
  return n;
}

} // namespace

ParseFailure::ParseFailure(std::size_t offset, const std::string& what)
    : Error(fmt::format("rawfile parse error at byte {}: {}", offset, what)), offset_(offset) {}

RawPlot parse_raw(std::string_view text) {
  RawPlot plot;
  Cursor cur(text);
  std::size_t nvars = 0;
  std::size_t npoints = 0;
  bool have_vars = false;
  bool have_points = false;
  bool binary = false;
  std::vector<std::string> types;

  while (true) {
    if (cur.done())
      throw ParseFailure(cur.pos(), "missing Values section");
    const auto at = cur.pos();
    const auto line = cur.line();
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      if (trim(line).empty())
        continue;
      throw ParseFailure(at, fmt::format("unexpected header line '{}'", line));
    }
    const auto key = lower(trim(line.substr(0, colon)));
    const auto value = line.substr(colon + 1);
    if (key == "title") {
      plot.title = std::string(trim(value));
    } else if (key == "plotname") {
      plot.plotname = std::string(trim(value));
    } else if (key == "flags") {
      plot.complex = lower(value).find("complex") != std::string::npos;
    } else if (key == "no. variables") {
      nvars = header_count(value, at, "variable count");
      have_vars = true;
    } else if (key == "no. points") {
      npoints = header_count(value, at, "point count");
      have_points = true;
    } else if (key == "variables") {
      if (!have_vars || nvars == 0)
        throw ParseFailure(at, "Variables section before a positive variable count");
      for (std::size_t i = 0; i < nvars; ++i) {
        const auto vat = cur.pos();
        if (cur.done())
          throw ParseFailure(vat, "truncated Variables section");
        const auto vline = cur.line();
        std::vector<std::string_view> fields;
        Cursor fc(vline);
        for (auto tok = fc.token(); !tok.empty(); tok = fc.token())
          fields.push_back(tok);
        if (fields.size() < 3)
          throw ParseFailure(vat, fmt::format("malformed variable line '{}'", vline));
        if (header_count(fields[0], vat, "variable index") != i)
          throw ParseFailure(vat, "variable indices out of order");
        plot.names.push_back(normalize_name(fields[1], fields[2]));
        types.emplace_back(fields[2]);
      }
    } else if (key == "values" || key == "binary") {
      binary = key == "binary";
      break;
    }
    // Date, Command, Option and other informational keys are ignored.
  }
  if (!have_points || plot.names.empty())
    throw ParseFailure(cur.pos(), "header lacks variable or point counts");
  if (npoints == 0)
    throw ParseFailure(cur.pos(), "Values section is empty");

  const std::size_t width = plot.complex ? 2 : 1;
  Eigen::MatrixXd re(npoints, nvars);
  Eigen::MatrixXd im = Eigen::MatrixXd::Zero(plot.complex ? npoints : 0, nvars);

  if (binary) {
    const auto data = cur.rest();
    const std::size_t need = npoints * nvars * width * sizeof(double);
    if (data.size() < need)
      throw ParseFailure(cur.pos() + data.size(), fmt::format("binary data truncated ({} of {} bytes)",
                                                              data.size(), need));
    const char* p = data.data();
    for (std::size_t i = 0; i < npoints; ++i)
      for (std::size_t v = 0; v < nvars; ++v) {
        double x = 0.0;
        std::memcpy(&x, p, sizeof x);
        p += sizeof x;
        re(i, v) = x;
        if (plot.complex) {
          std::memcpy(&x, p, sizeof x);
          p += sizeof x;
          im(i, v) = x;
        }
      }
  } else {
    for (std::size_t i = 0; i < npoints; ++i) {
      const auto at = cur.pos();
      const auto idx = cur.token();
      if (idx.empty())
        throw ParseFailure(at, fmt::format("Values section ends after {} of {} points", i, npoints));
      if (header_count(idx, at, "point index") != i)
        throw ParseFailure(at, fmt::format("expected point {}", i));
      for (std::size_t v = 0; v < nvars; ++v) {
        const auto vat = cur.pos();
        const auto tok = cur.token();
        if (tok.empty())
          throw ParseFailure(vat, fmt::format("point {} is missing values", i));
        if (plot.complex) {
          const auto comma = tok.find(',');
          if (comma == std::string_view::npos)
            throw ParseFailure(vat, fmt::format("expected complex pair, got '{}'", tok));
          re(i, v) = to_double(tok.substr(0, comma), vat);
          im(i, v) = to_double(tok.substr(comma + 1), vat);
        } else {
          re(i, v) = to_double(tok, vat);
        }
      }
    }
  }

  if (lower(plot.plotname).starts_with("operating point")) {
    for (std::size_t v = 0; v < nvars; ++v)
      plot.op_point[plot.names[v]] = re(0, v);
    return plot;
  }

  const Eigen::VectorXd sweep = re.col(0);
  for (std::size_t v = 1; v < nvars; ++v) {
    const auto& name = plot.names[v];
    if (plot.complex) {
      ComplexWaveform w(name, sweep, Eigen::VectorXcd(npoints));
      w.values.real() = re.col(static_cast<Eigen::Index>(v));
      w.values.imag() = im.col(static_cast<Eigen::Index>(v));
      plot.waveforms.emplace(name, std::move(w));
    } else {
      plot.waveforms.emplace(name, RealWaveform(name, sweep, re.col(static_cast<Eigen::Index>(v))));
    }
  }
  for (const auto& [name, w] : plot.waveforms) {
    try {
      std::visit([](const auto& x) { x.validate(); }, w);
    } catch (const Error& e) {
      throw ParseFailure(cur.pos(), e.what());
    }
  }
  return plot;
}

std::string log_excerpt(std::string_view log, std::size_t max_lines) {
  std::vector<std::string_view> lines;
  Cursor cur(log);
  while (!cur.done()) {
    const auto l = cur.line();
    if (!trim(l).empty())
      lines.push_back(l);
  }
  const std::size_t start = lines.size() > max_lines ? lines.size() - max_lines : 0;
  std::string out;
  for (std::size_t i = start; i < lines.size(); ++i) {
    out += lines[i];
    out += '\n';
  }
  return out;
}

} // namespace amsizer
