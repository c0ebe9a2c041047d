// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedprune/backdoor.hpp"
#include "fedprune/model.hpp"
#include "fedprune/network.hpp"
#include "fedprune/partition.hpp"

namespace fedprune::fed {

enum class Aggregation { simplified, weighted };

std::string_view aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view s);

struct FedConfig {
  int clients = 10;
  double participation = 1.0;  // k
  double global_lr = 1.0;      // eta, weighted mode only
  nn::LocalTraining local{2, 32, 0.1f, 0.0f, -1};
  int attacker_epochs = 5;
  int rounds = 20;
  std::uint64_t seed = 1;
  Aggregation mode = Aggregation::simplified;
  bool record_timing = false;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

/// ceil(k*N) distinct ids, ascending, drawn uniformly for (seed, round).
/// k = 1 returns every client.
std::vector<int> select_clients(int clients, double participation, int round, std::uint64_t seed);

struct ClientUpdate {
  int client = 0;
  nn::ParamSet delta;
  std::size_t samples = 0;
};

/// simplified: global + mean(delta); weighted: global + eta * sum(n_i delta_i) / sum(n_i).
/// Updates are summed in the order given. Throws ProtocolError naming the
/// client whose update has the wrong layout.
nn::ParamSet aggregate(const nn::ParamSet& global, std::span<const ClientUpdate> updates, Aggregation mode,
                       double eta = 1.0);

enum class Phase { train, prune, adjust, finetune };

std::string_view phase_name(Phase p);
Phase parse_phase(std::string_view s);

/// One evaluation point. `x` is the round for train and finetune rows, the
/// pruned channel count for prune rows and delta for adjust rows.
struct RoundMetrics {
  double x = 0.0;
  Phase phase = Phase::train;
  double test_acc = 0.0;
  double atk_acc = 0.0;
  double train_loss = 0.0;
  double seconds = 0.0;
};

/// Reporting sets. The backdoor set may be null when there is no attack.
struct EvalSets {
  const data::Dataset* test = nullptr;
  const data::Dataset* backdoor = nullptr;
  const data::NormStats* norm = nullptr;
};

RoundMetrics measure(const nn::ParamSet& params, const EvalSets& eval, double x, Phase phase, double train_loss = 0.0);

struct Adversary {
  int client = 0;
  data::BackdoorSpec spec;  // alpha already divided among attackers
};

struct AttackPlan {
  std::vector<Adversary> adversaries;
  /// Known future pruning mask; the attacker trains through it.
  std::optional<nn::ChannelMask> oracle_mask;
  bool active = true;

  const Adversary* find(int client) const;
};

struct RoundResult {
  nn::ParamSet global;
  RoundMetrics metrics;
};

/// Selected clients train from `global` in ascending id order; attackers
/// train on poisoned data and submit an amplified update. The channel mask
/// of `global` stays enforced on the result.
RoundResult run_round(const nn::ParamSet& global, std::span<const data::ClientShard> shards, const FedConfig& cfg,
                      const AttackPlan& attack, const EvalSets& eval, int round, Phase phase = Phase::train);

struct TrainResult {
  nn::ParamSet global;
  std::vector<RoundMetrics> metrics;
};

using RoundCallback = std::function<void(int round, const nn::ParamSet& global, const RoundMetrics& metrics)>;

TrainResult train_loop(nn::ParamSet initial, std::span<const data::ClientShard> shards, const FedConfig& cfg,
                       const AttackPlan& attack, const EvalSets& eval, const RoundCallback& on_round = {});

}  // namespace fedprune::fed
