// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedprune/config.hpp"
#include "fedprune/dataset.hpp"
#include "fedprune/defense.hpp"
#include "fedprune/fedsim.hpp"
#include "fedprune/model.hpp"

namespace fedprune::exp {

/// Loaded and split data for one run.
struct Inputs {
  data::Dataset train;
  data::Dataset test;        // reporting split
  data::Dataset validation;  // server split
  data::NormStats norm;
};

/// Loads the dataset files, applies train_subset and the validation split,
/// and takes normalization statistics from the config or the validation set.
Inputs prepare_inputs(const ExperimentConfig& cfg);

/// One table row. Phases that did not run are left empty.
struct SummaryRow {
  int vic = 0, atk = 0;
  double train_test = 0.0, train_atk = 0.0;
  std::optional<int> prune_n;
  std::optional<double> prune_test, prune_atk;
  std::optional<std::size_t> adj_n;
  std::optional<double> adj_test, adj_atk;
  std::optional<double> ft_test, ft_atk;
};

inline constexpr const char* kSummaryHeader =
    "vic,atk,train_test,train_atk,prune_n,prune_test,prune_atk,adj_n,adj_test,adj_atk,ft_test,ft_atk";

std::string format_summary(const SummaryRow& row);

struct ExperimentResult {
  SummaryRow summary;
  std::vector<fed::RoundMetrics> metrics;
  std::vector<fed::RoundMetrics> prune_curve;  // only with `curves`
  std::vector<fed::RoundMetrics> delta_curve;  // only with `curves`
  std::optional<defense::PruneState> prune;
  std::optional<defense::SweepResult> sweep;
  double delta_used = defense::kNoAdjustment;
  int finetune_rounds = 0;
  nn::ParamSet trained;
  nn::ParamSet final_model;
};

/// train, then the configured defense (prune, adjust, fine-tune, adjust).
/// Writes metrics.csv, summary.csv, config.ini, prune_report.txt and
/// checkpoints under cfg.output_dir. Errors are rethrown as ConfigError or
/// PhaseError tagged with the failing phase.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Inputs& inputs, std::ostream* log = nullptr);

}  // namespace fedprune::exp
