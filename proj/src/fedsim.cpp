// SPDX-License-Identifier: Apache-2.0
#include "fedprune/fedsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "fedprune/attacks.hpp"
#include "fedprune/error.hpp"
#include "fedprune/rng.hpp"

namespace fedprune::fed {

std::string_view aggregation_name(Aggregation a) { return a == Aggregation::simplified ? "simplified" : "weighted"; }

Aggregation parse_aggregation(std::string_view s) {
  if (s == "simplified") return Aggregation::simplified;
  if (s == "weighted") return Aggregation::weighted;
  throw ConfigError("unknown aggregation mode '" + std::string(s) + "'");
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::train: return "train";
    case Phase::prune: return "prune";
    case Phase::adjust: return "adjust";
    case Phase::finetune: return "finetune";
  }
  return "train";
}

Phase parse_phase(std::string_view s) {
  for (Phase p : {Phase::train, Phase::prune, Phase::adjust, Phase::finetune})
    if (phase_name(p) == s) return p;
  throw ArgumentError("unknown phase '" + std::string(s) + "'");
}

void FedConfig::validate() const {
  if (clients < 1) throw ConfigError("clients must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) throw ConfigError("participation must be in (0, 1]");
  if (!(global_lr > 0.0)) throw ConfigError("global_lr must be positive");
  if (rounds < 0) throw ConfigError("rounds must be nonnegative");
  if (local.epochs < 1 || attacker_epochs < 1) throw ConfigError("local epochs must be at least 1");
  if (local.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(local.lr > 0.0f)) throw ConfigError("local_lr must be positive");
  if (local.lambda_last_conv < 0.0f) throw ConfigError("lambda_last_conv must be nonnegative");
}

std::vector<int> select_clients(int clients, double participation, int round, std::uint64_t seed) {
  const int count = static_cast<int>(std::ceil(participation * clients - 1e-9));
  if (clients < 1 || count < 1 || count > clients) throw ArgumentError("participation selects no clients");
  std::vector<int> ids(static_cast<std::size_t>(clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (count == clients) return ids;
  Rng rng(derive_seed(seed, {0x5e1ec7, static_cast<std::uint64_t>(round)}));
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(clients - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

nn::ParamSet aggregate(const nn::ParamSet& global, std::span<const ClientUpdate> updates, Aggregation mode,
                       double eta) {
  for (const auto& u : updates)
    if (!u.delta.same_layout(global))
      throw ProtocolError("update from client " + std::to_string(u.client) + " does not match the global model");
  nn::ParamSet out = global;
  if (updates.empty()) return out;

  std::vector<double> weight(updates.size());
  if (mode == Aggregation::simplified) {
    std::fill(weight.begin(), weight.end(), 1.0 / static_cast<double>(updates.size()));
  } else {
    double total = 0.0;
    for (const auto& u : updates) total += static_cast<double>(u.samples);
    if (!(total > 0.0)) throw ProtocolError("weighted aggregation needs a positive sample count");
    for (std::size_t i = 0; i < updates.size(); ++i)
      weight[i] = eta * static_cast<double>(updates[i].samples) / total;
  }

  auto dst = out.tensors();
  std::vector<double> acc;
  for (std::size_t t = 0; t < dst.size(); ++t) {
    acc.assign(dst[t].size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i) {
      const auto src = updates[i].delta.tensors()[t];
      const double w = weight[i];
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * static_cast<double>(src[k]);
    }
    for (std::size_t k = 0; k < acc.size(); ++k)
      if (acc[k] != 0.0) dst[t][k] = static_cast<float>(static_cast<double>(dst[t][k]) + acc[k]);
  }
  return out;
}

RoundMetrics measure(const nn::ParamSet& params, const EvalSets& eval, double x, Phase phase, double train_loss) {
  RoundMetrics m;
  m.x = x;
  m.phase = phase;
  m.train_loss = train_loss;
  if (eval.test && !eval.test->empty()) m.test_acc = nn::evaluate(params, *eval.test, *eval.norm).accuracy;
  if (eval.backdoor && !eval.backdoor->empty())
    m.atk_acc = nn::evaluate(params, *eval.backdoor, *eval.norm).accuracy;
  return m;
}

const Adversary* AttackPlan::find(int client) const {
  if (!active) return nullptr;
  for (const auto& a : adversaries)
    if (a.client == client) return &a;
  return nullptr;
}

RoundResult run_round(const nn::ParamSet& global, std::span<const data::ClientShard> shards, const FedConfig& cfg,
                      const AttackPlan& attack, const EvalSets& eval, int round, Phase phase) {
  if (static_cast<int>(shards.size()) != cfg.clients)
    throw ConfigError("expected " + std::to_string(cfg.clients) + " shards, got " + std::to_string(shards.size()));
  const auto start = std::chrono::steady_clock::now();
  const auto selected = select_clients(cfg.clients, cfg.participation, round, cfg.seed);

  std::vector<ClientUpdate> updates;
  updates.reserve(selected.size());
  double loss_sum = 0.0;
  int benign = 0;
  for (int id : selected) {
    const auto& shard = shards[static_cast<std::size_t>(id)];
    const std::uint64_t seed =
        derive_seed(cfg.seed, {static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(id)});
    nn::LocalTraining local = cfg.local;
    local.round = round;
    if (const Adversary* adv = attack.find(id)) {
      local.epochs = cfg.attacker_epochs;
      local.lambda_last_conv = 0.0f;
      nn::ParamSet x_atk =
          attack.oracle_mask
              ? attacks::pruning_aware_train(global, shard.data, adv->spec, *attack.oracle_mask, *eval.norm, local, seed)
              : attacks::attacker_local_train(global, shard.data, adv->spec, *eval.norm, local, seed);
      updates.push_back({id, attacks::malicious_update(x_atk, global, adv->spec.alpha), shard.n()});
    } else {
      if (shard.data.empty()) continue;
      nn::ParamSet local_model = global;
      loss_sum += nn::train_local(local_model, shard.data, *eval.norm, local, seed);
      ++benign;
      updates.push_back({id, nn::difference(local_model, global), shard.n()});
    }
  }

  RoundResult result{aggregate(global, updates, cfg.mode, cfg.global_lr), {}};
  if (!global.mask().is_identity()) nn::zero_masked(result.global, global.mask());
  result.global.mask() = global.mask();
  if (!result.global.all_finite()) throw DivergenceError("aggregated model is not finite", round, -1);

  result.metrics = measure(result.global, eval, round, phase, benign ? loss_sum / benign : 0.0);
  if (cfg.record_timing)
    result.metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainResult train_loop(nn::ParamSet initial, std::span<const data::ClientShard> shards, const FedConfig& cfg,
                       const AttackPlan& attack, const EvalSets& eval, const RoundCallback& on_round) {
  cfg.validate();
  TrainResult out{std::move(initial), {}};
  out.metrics.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int r = 1; r <= cfg.rounds; ++r) {
    RoundResult step = run_round(out.global, shards, cfg, attack, eval, r, Phase::train);
    out.global = std::move(step.global);
    out.metrics.push_back(step.metrics);
    if (on_round) on_round(r, out.global, step.metrics);
  }
  return out;
}

}  // namespace fedprune::fed
