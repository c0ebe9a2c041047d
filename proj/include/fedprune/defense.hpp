// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fedprune/dataset.hpp"
#include "fedprune/fedsim.hpp"
#include "fedprune/model.hpp"
#include "fedprune/partition.hpp"

namespace fedprune::defense {

/// Mean activation of each designated-layer channel over one client's images.
struct ActivationProfile {
  int client = 0;
  int layer = 0;
  std::vector<double> mean;
  std::size_t images = 0;
};

ActivationProfile client_profile(const nn::ParamSet& params, const data::Dataset& shard, const data::NormStats& norm,
                                 int client = 0);

/// ranks[c] in 1..C, 1 = most dormant. Ties give the lower channel index the lower rank.
struct NeuronRanking {
  std::vector<int> ranks;
};

NeuronRanking rank_neurons(std::span<const double> activations);
inline NeuronRanking rank_neurons(const ActivationProfile& p) { return rank_neurons(p.mean); }

/// Channels ascending by mean rank, ties by index. Throws ProtocolError on a
/// length mismatch.
std::vector<int> aggregate_rankings(std::span<const NeuronRanking> rankings);

/// bits[c] = 0 for the floor(p*C) least active channels (ties by index), 1 otherwise.
struct VoteMask {
  std::vector<std::uint8_t> bits;
  double rate = 0.5;
};

VoteMask vote_mask(std::span<const double> activations, double rate);
inline VoteMask vote_mask(const ActivationProfile& p, double rate) { return vote_mask(p.mean, rate); }

/// Channels ascending by vote sum, ties by index.
std::vector<int> aggregate_votes(std::span<const VoteMask> masks);

/// max(1, floor(C/25)).
int default_prune_step(int channels);

/// Pruned counts at which accuracy is tested: 0, step, 2*step, ... and C.
std::vector<int> testing_points(int channels, int step);

/// Index into `accuracies` of the last accepted testing point: scanning
/// forward, stop at the first point more than `threshold` below its
/// predecessor and keep the predecessor.
std::size_t find_stop(std::span<const double> accuracies, double threshold);

/// Mask that prunes the first `count` channels of `order`.
nn::ChannelMask prefix_mask(const nn::ModelSpec& spec, std::span<const int> order, int count);

struct PrunePoint {
  int pruned = 0;
  double val_acc = 0.0;
};

struct PruneState {
  std::vector<int> order;
  nn::ChannelMask mask;
  int pruned = 0;
  std::vector<PrunePoint> points;  // every tested point, including a rejected last one

  /// One `pruned_count,val_acc` line per testing point.
  std::string report() const;
};

struct PruneResult {
  nn::ParamSet params;
  PruneState state;
};

/// Called for each tested point with the masked model.
using PruneObserver = std::function<void(int pruned, const nn::ParamSet& masked)>;

/// Prunes along `order`, testing on `validation` every `step` channels, and
/// rolls back the step whose accuracy falls more than `drop_threshold` below
/// the previous point. With `run_to_end` the remaining points are still
/// evaluated and observed but do not change the result.
PruneResult iterative_prune(const nn::ParamSet& params, std::span<const int> order, const data::Dataset& validation,
                            const data::NormStats& norm, double drop_threshold, int step,
                            const PruneObserver& observe = {}, bool run_to_end = false);

/// What a client reports for a testing point given its honest accuracy.
using ReportFn = std::function<double(int client, int pruned, double honest)>;

/// The stop point chosen from the clients' mean accuracy on their own shards.
/// Returns the accepted pruned count.
int client_feedback_prune(std::span<const int> order, std::span<const data::ClientShard> shards,
                          const nn::ParamSet& params, const data::NormStats& norm, double drop_threshold, int step,
                          const ReportFn& report = {});

struct AdjustResult {
  std::size_t zeroed = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Zeroes the layer's weights outside mean +- delta * stddev (population
/// statistics of the weights before zeroing, biases excluded). Filters of
/// channels pruned by the model's mask are left out of the statistics.
/// Throws DegenerateError when stddev is zero.
AdjustResult adjust_extreme_weights(nn::ParamSet& params, int layer, double delta);

inline constexpr double kNoAdjustment = std::numeric_limits<double>::infinity();

std::vector<double> default_delta_grid();

struct DeltaPoint {
  double delta = 0.0;
  double val_acc = 0.0;
  std::size_t zeroed = 0;
};

struct SweepResult {
  double delta = kNoAdjustment;  // infinity when even the first grid value fails
  double base_acc = 0.0;
  std::vector<DeltaPoint> points;
};

/// Walks the descending grid, adjusting a fresh copy each time, and returns
/// the last delta before validation accuracy falls more than `drop_threshold`
/// below the unadjusted model's.
SweepResult sweep_delta(const nn::ParamSet& params, const data::Dataset& validation, const data::NormStats& norm,
                        std::span<const double> grid, double drop_threshold);

struct FineTuneResult {
  nn::ParamSet global;
  std::vector<fed::RoundMetrics> metrics;
  int best_round = 0;
};

/// Federated rounds from a pruned model with the mask enforced. Stops after
/// `patience` rounds without a validation improvement and returns the best
/// model seen (round 0 is the starting model).
FineTuneResult fine_tune(const nn::ParamSet& pruned, std::span<const data::ClientShard> shards,
                         const fed::FedConfig& cfg, const fed::AttackPlan& attack, const fed::EvalSets& eval,
                         const data::Dataset& validation, int max_rounds, int patience = 2);

}  // namespace fedprune::defense
