// SPDX-License-Identifier: Apache-2.0
#include "fedprune/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedprune/error.hpp"

namespace fedprune::defense {
namespace {

std::size_t common_length(std::size_t first, std::size_t other, std::size_t client) {
  if (first != other)
    throw ProtocolError("client " + std::to_string(client) + " submitted " + std::to_string(other) +
                        " entries, expected " + std::to_string(first));
  return first;
}

// Indices sorted ascending by key, ties by index.
template <class Key>
std::vector<int> order_by(const std::vector<Key>& key) {
  std::vector<int> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)]; });
  return order;
}

}  // namespace

ActivationProfile client_profile(const nn::ParamSet& params, const data::Dataset& shard, const data::NormStats& norm,
                                 int client) {
  if (shard.empty()) throw ArgumentError("client " + std::to_string(client) + " has no images to profile");
  ActivationProfile p;
  p.client = client;
  p.layer = params.spec().prune_layer;
  p.images = shard.size();
  p.mean = nn::channel_activation_totals(params, shard, norm);
  for (double& v : p.mean) v /= static_cast<double>(shard.size());
  return p;
}

NeuronRanking rank_neurons(std::span<const double> activations) {
  const auto order = order_by(std::vector<double>(activations.begin(), activations.end()));
  NeuronRanking r;
  r.ranks.resize(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) r.ranks[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos) + 1;
  return r;
}

std::vector<int> aggregate_rankings(std::span<const NeuronRanking> rankings) {
  if (rankings.empty()) throw ProtocolError("no rankings to aggregate");
  const std::size_t c = rankings[0].ranks.size();
  std::vector<std::int64_t> total(c, 0);
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    common_length(c, rankings[i].ranks.size(), i);
    for (std::size_t k = 0; k < c; ++k) total[k] += rankings[i].ranks[k];
  }
  return order_by(total);
}

VoteMask vote_mask(std::span<const double> activations, double rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw ArgumentError("pruning rate must be in (0, 1)");
  const auto order = order_by(std::vector<double>(activations.begin(), activations.end()));
  VoteMask m;
  m.rate = rate;
  m.bits.assign(order.size(), 1);
  const auto zeros = static_cast<std::size_t>(std::floor(rate * static_cast<double>(order.size()) + 1e-9));
  for (std::size_t i = 0; i < zeros; ++i) m.bits[static_cast<std::size_t>(order[i])] = 0;
  return m;
}

std::vector<int> aggregate_votes(std::span<const VoteMask> masks) {
  if (masks.empty()) throw ProtocolError("no masks to aggregate");
  const std::size_t c = masks[0].bits.size();
  std::vector<int> votes(c, 0);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    common_length(c, masks[i].bits.size(), i);
    for (std::size_t k = 0; k < c; ++k) votes[k] += masks[i].bits[k];
  }
  return order_by(votes);
}

int default_prune_step(int channels) { return std::max(1, channels / 25); }

std::vector<int> testing_points(int channels, int step) {
  if (step < 1) throw ArgumentError("prune step must be at least 1");
  std::vector<int> pts;
  for (int k = 0; k < channels; k += step) pts.push_back(k);
  pts.push_back(channels);
  return pts;
}

std::size_t find_stop(std::span<const double> accuracies, double threshold) {
  for (std::size_t i = 1; i < accuracies.size(); ++i)
    if (accuracies[i - 1] - accuracies[i] > threshold) return i - 1;
  return accuracies.empty() ? 0 : accuracies.size() - 1;
}

nn::ChannelMask prefix_mask(const nn::ModelSpec& spec, std::span<const int> order, int count) {
  nn::ChannelMask mask = nn::ChannelMask::all_keep(spec);
  for (int i = 0; i < count; ++i) mask.keep.at(static_cast<std::size_t>(order[static_cast<std::size_t>(i)])) = 0;
  return mask;
}

namespace {

void check_order(const nn::ModelSpec& spec, std::span<const int> order) {
  const auto c = static_cast<std::size_t>(spec.designated().out_channels);
  std::vector<int> sorted(order.begin(), order.end());
  std::sort(sorted.begin(), sorted.end());
  bool ok = sorted.size() == c;
  for (std::size_t i = 0; ok && i < c; ++i) ok = sorted[i] == static_cast<int>(i);
  if (!ok) throw ArgumentError("pruning order is not a permutation of the designated layer's channels");
}

nn::ParamSet masked_model(const nn::ParamSet& params, std::span<const int> order, int count) {
  nn::ChannelMask mask = prefix_mask(params.spec(), order, count);
  for (std::size_t c = 0; c < mask.size(); ++c)
    if (!params.mask().kept(c)) mask.keep[c] = 0;
  return nn::apply_channel_mask(params, mask);
}

}  // namespace

std::string PruneState::report() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  for (const auto& p : points) out << p.pruned << ',' << p.val_acc << '\n';
  return out.str();
}

PruneResult iterative_prune(const nn::ParamSet& params, std::span<const int> order, const data::Dataset& validation,
                            const data::NormStats& norm, double drop_threshold, int step,
                            const PruneObserver& observe, bool run_to_end) {
  if (validation.empty()) throw ArgumentError("validation set is empty");
  if (!(drop_threshold > 0.0)) throw ArgumentError("drop threshold must be positive");
  check_order(params.spec(), order);
  const auto pts = testing_points(params.spec().designated().out_channels, step);

  PruneResult res{params, {}};
  res.state.order.assign(order.begin(), order.end());
  std::size_t accepted = 0;
  bool stopped = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    nn::ParamSet model = masked_model(params, order, pts[i]);
    const double acc = nn::evaluate(model, validation, norm).accuracy;
    res.state.points.push_back({pts[i], acc});
    if (observe) observe(pts[i], model);
    if (!stopped) {
      if (i > 0 && res.state.points[i - 1].val_acc - acc > drop_threshold) {
        stopped = true;
      } else {
        accepted = i;
        res.params = std::move(model);
      }
    }
    if (stopped && !run_to_end) break;
  }
  res.state.pruned = pts[accepted];
  res.state.mask = res.params.mask();
  return res;
}

int client_feedback_prune(std::span<const int> order, std::span<const data::ClientShard> shards,
                          const nn::ParamSet& params, const data::NormStats& norm, double drop_threshold, int step,
                          const ReportFn& report) {
  if (shards.empty()) throw ArgumentError("client feedback needs at least one shard");
  check_order(params.spec(), order);
  const auto pts = testing_points(params.spec().designated().out_channels, step);
  std::vector<double> mean;
  for (int k : pts) {
    const nn::ParamSet model = masked_model(params, order, k);
    double sum = 0.0;
    for (const auto& s : shards) {
      const double honest = nn::evaluate(model, s.data, norm).accuracy;
      sum += report ? report(s.id, k, honest) : honest;
    }
    mean.push_back(sum / static_cast<double>(shards.size()));
    if (mean.size() > 1 && mean[mean.size() - 2] - mean.back() > drop_threshold) break;
  }
  return pts[find_stop(mean, drop_threshold)];
}

AdjustResult adjust_extreme_weights(nn::ParamSet& params, int layer, double delta) {
  if (!(delta > 0.0)) throw ArgumentError("delta must be positive");
  if (layer < 0 || static_cast<std::size_t>(layer) >= params.spec().layers.size())
    throw ConfigError("layer index " + std::to_string(layer) + " out of range");
  auto& w = params.layer(static_cast<std::size_t>(layer)).weight;
  const auto& mask = params.mask();
  const std::size_t outs = static_cast<std::size_t>(params.spec().layers[static_cast<std::size_t>(layer)].out_channels);
  const std::size_t filter = w.size() / outs;
  const bool masked = mask.layer == layer && mask.size() == outs;
  const auto live = [&](std::size_t c) { return !masked || mask.kept(c); };

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < outs; ++c)
    if (live(c))
      for (std::size_t i = c * filter; i < (c + 1) * filter; ++i) sum += w[i];
  for (std::size_t c = 0; c < outs; ++c) count += live(c) ? filter : 0;
  if (count == 0) throw DegenerateError("layer " + std::to_string(layer) + " has no unpruned weights");
  const double n = static_cast<double>(count);
  const double mean = sum / n;
  double sq = 0.0;
  for (std::size_t c = 0; c < outs; ++c)
    if (live(c))
      for (std::size_t i = c * filter; i < (c + 1) * filter; ++i) sq += (w[i] - mean) * (w[i] - mean);
  const double sd = std::sqrt(sq / n);
  if (!(sd > 0.0)) throw DegenerateError("layer " + std::to_string(layer) + " weights have zero standard deviation");
  AdjustResult r{0, mean, sd};
  const double lo = mean - delta * sd, hi = mean + delta * sd;
  for (std::size_t c = 0; c < outs; ++c) {
    if (!live(c)) continue;
    for (std::size_t i = c * filter; i < (c + 1) * filter; ++i) {
      if (w[i] < lo || w[i] > hi) {
        w[i] = 0.0f;
        ++r.zeroed;
      }
    }
  }
  return r;
}

std::vector<double> default_delta_grid() {
  std::vector<double> g;
  for (int i = 10; i >= 2; --i) g.push_back(i * 0.5);
  return g;
}

SweepResult sweep_delta(const nn::ParamSet& params, const data::Dataset& validation, const data::NormStats& norm,
                        std::span<const double> grid, double drop_threshold) {
  if (grid.empty()) throw ArgumentError("delta grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] < grid[i - 1])) throw ArgumentError("delta grid must be strictly descending");
  SweepResult res;
  res.base_acc = nn::evaluate(params, validation, norm).accuracy;
  for (double d : grid) {
    nn::ParamSet copy = params;
    const auto adj = adjust_extreme_weights(copy, params.spec().prune_layer, d);
    const double acc = nn::evaluate(copy, validation, norm).accuracy;
    res.points.push_back({d, acc, adj.zeroed});
    if (res.base_acc - acc > drop_threshold) break;
    res.delta = d;
  }
  return res;
}

FineTuneResult fine_tune(const nn::ParamSet& pruned, std::span<const data::ClientShard> shards,
                         const fed::FedConfig& cfg, const fed::AttackPlan& attack, const fed::EvalSets& eval,
                         const data::Dataset& validation, int max_rounds, int patience) {
  FineTuneResult res{pruned, {}, 0};
  if (max_rounds <= 0) return res;
  if (patience < 1) throw ArgumentError("patience must be at least 1");
  double best = nn::evaluate(pruned, validation, *eval.norm).accuracy;
  nn::ParamSet current = pruned;
  int stale = 0;
  for (int r = 1; r <= max_rounds; ++r) {
    auto step = fed::run_round(current, shards, cfg, attack, eval, r, fed::Phase::finetune);
    current = std::move(step.global);
    res.metrics.push_back(step.metrics);
    const double acc = nn::evaluate(current, validation, *eval.norm).accuracy;
    if (acc > best) {
      best = acc;
      res.global = current;
      res.best_round = r;
      stale = 0;
    } else if (++stale >= patience) {
      break;
    }
  }
  return res;
}

}  // namespace fedprune::defense
