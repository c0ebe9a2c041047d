// SPDX-License-Identifier: Apache-2.0
#include "fedprune/metrics.hpp"

#include <charconv>
#include <cstdio>

#include "fedprune/error.hpp"
#include "fedprune/io.hpp"

namespace fedprune::exp {
namespace {

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double number(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ArgumentError("metrics line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string format_metrics(std::span<const fed::RoundMetrics> rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& m : rows) {
    out += shortest(m.x) + ',' + std::string(fed::phase_name(m.phase)) + ',' + fixed(m.test_acc, 6) + ',' +
           fixed(m.atk_acc, 6) + ',' + fixed(m.train_loss, 6) + ',' + fixed(m.seconds, 3) + '\n';
  }
  return out;
}

std::vector<fed::RoundMetrics> parse_metrics(std::string_view csv) {
  std::vector<fed::RoundMetrics> rows;
  std::size_t pos = 0, line = 0;
  while (pos < csv.size()) {
    auto nl = csv.find('\n', pos);
    if (nl == std::string_view::npos) nl = csv.size();
    std::string_view text = csv.substr(pos, nl - pos);
    pos = nl + 1;
    ++line;
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    if (line == 1) {
      if (text != kMetricsHeader) throw ArgumentError("metrics file does not start with the expected header");
      continue;
    }
    if (text.empty()) continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      cols.push_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols.size() != 6)
      throw ArgumentError("metrics line " + std::to_string(line) + ": expected 6 columns, got " +
                          std::to_string(cols.size()));
    fed::RoundMetrics m;
    m.x = number(cols[0], line);
    try {
      m.phase = fed::parse_phase(cols[1]);
    } catch (const ArgumentError&) {
      throw ArgumentError("metrics line " + std::to_string(line) + ": unknown phase '" + std::string(cols[1]) + "'");
    }
    m.test_acc = number(cols[2], line);
    m.atk_acc = number(cols[3], line);
    m.train_loss = number(cols[4], line);
    m.seconds = number(cols[5], line);
    rows.push_back(m);
  }
  if (line == 0) throw ArgumentError("metrics file is empty");
  return rows;
}

void write_metrics(const std::filesystem::path& path, std::span<const fed::RoundMetrics> rows) {
  io::write_file_atomic(path, format_metrics(rows));
}

std::vector<fed::RoundMetrics> read_metrics(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_metrics(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

PlotKind parse_plot_kind(std::string_view s) {
  if (s == "training-curve") return PlotKind::training_curve;
  if (s == "prune-curve") return PlotKind::prune_curve;
  if (s == "delta-curve") return PlotKind::delta_curve;
  throw ArgumentError("unknown plot kind '" + std::string(s) + "' (training-curve, prune-curve, delta-curve)");
}

std::string emit_plot_data(std::span<const fed::RoundMetrics> rows, PlotKind kind) {
  fed::Phase phase = fed::Phase::train;
  std::string out;
  switch (kind) {
    case PlotKind::training_curve: phase = fed::Phase::train; out = "round"; break;
    case PlotKind::prune_curve: phase = fed::Phase::prune; out = "pruned"; break;
    case PlotKind::delta_curve: phase = fed::Phase::adjust; out = "delta"; break;
  }
  out += "\ttest_acc\tatk_acc\n";
  for (const auto& m : rows)
    if (m.phase == phase) out += shortest(m.x) + '\t' + fixed(m.test_acc, 6) + '\t' + fixed(m.atk_acc, 6) + '\n';
  return out;
}

}  // namespace fedprune::exp
