// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedprune/fedsim.hpp"

namespace fedprune::exp {

inline constexpr std::string_view kMetricsHeader = "round,phase,test_acc,atk_acc,train_loss,seconds";

std::string format_metrics(std::span<const fed::RoundMetrics> rows);
/// Throws ArgumentError naming the line of a malformed row.
std::vector<fed::RoundMetrics> parse_metrics(std::string_view csv);

void write_metrics(const std::filesystem::path& path, std::span<const fed::RoundMetrics> rows);
std::vector<fed::RoundMetrics> read_metrics(const std::filesystem::path& path);

enum class PlotKind { training_curve, prune_curve, delta_curve };

PlotKind parse_plot_kind(std::string_view s);

/// Tab-separated `x test_acc atk_acc` rows of the phase the kind plots:
/// train rounds, prune points or adjust deltas.
std::string emit_plot_data(std::span<const fed::RoundMetrics> rows, PlotKind kind);

}  // namespace fedprune::exp
