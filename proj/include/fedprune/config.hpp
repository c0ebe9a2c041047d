// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration: one `key = value` per line, `#` starts a comment.
// Lists are comma separated. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace fedprune::exp {

struct ExperimentConfig {
  std::string dataset = "mnist";  // mnist | fmnist | cifar10
  std::string model;              // empty: the dataset's default architecture
  std::string data_dir;           // empty: the build's data directory
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  int clients = 10;
  int labels_per_client = 3;
  double participation = 1.0;
  int rounds = 20;
  int local_epochs = 2;
  int attacker_epochs = 5;
  double local_lr = 0.1;
  int batch_size = 32;
  double global_lr = 1.0;
  std::string aggregation = "simplified";
  double lambda_last_conv = 0.0;
  int train_subset = 0;
  double validation_fraction = 0.1;
  std::vector<double> norm_mean;
  std::vector<double> norm_std;

  int attackers = 1;
  std::vector<int> attacker_ids;  // empty: 0 .. attackers-1
  std::string pattern = "corner";  // corner | strips
  int pattern_size = 1;
  int vic_label = 9;
  int atk_label = 1;
  double alpha = 3.0;
  double poison_fraction = 0.5;
  bool dba = false;
  bool adversarial_ranking = false;
  bool pruning_aware = false;
  std::string oracle_checkpoint;  // mask source for pruning_aware

  std::string defense = "rank";  // rank | vote | adjust | none
  double vote_rate = 0.5;
  double drop_threshold = 0.01;
  int prune_step = 0;  // 0: max(1, C/25)
  bool feedback_prune = false;
  bool adjust_weights = true;
  double delta = 3.0;
  bool delta_sweep = false;
  std::vector<double> delta_grid = {5.0, 4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0};
  bool fine_tune = false;
  int finetune_rounds = 15;
  int finetune_patience = 2;
  bool finetune_attack = true;

  int checkpoint_every = 0;
  bool record_timing = false;
  bool curves = false;

  bool operator==(const ExperimentConfig&) const = default;

  /// Model name after applying the dataset default.
  std::string model_name() const;
  std::filesystem::path data_root() const;
  /// attacker_ids when given. Otherwise the lowest ids for which
  /// `holds_victim` is true, then the lowest remaining ids.
  std::vector<int> resolved_attacker_ids(const std::function<bool(int)>& holds_victim = {}) const;

  /// Cross-field checks. Throws ConfigError.
  void validate() const;
  /// Throws ConfigError if a dataset file the run needs is missing.
  void check_files() const;
};

/// Throws ConfigError("line N: ...") on unknown keys, bad values or
/// duplicate keys, then validates.
ExperimentConfig parse_config_text(std::string_view text);
/// parse_config_text plus check_files.
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Every key, one per line, in a form parse_config_text reads back equal.
std::string serialize_config(const ExperimentConfig& cfg);

/// key, type, default and description of every key.
std::string config_reference();

/// Image and label file paths for `dataset` under `root`.
struct DataFiles {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};
DataFiles data_files(std::string_view dataset, const std::filesystem::path& root);

}  // namespace fedprune::exp
