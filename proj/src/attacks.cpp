// SPDX-License-Identifier: Apache-2.0
#include "fedprune/attacks.hpp"

#include "fedprune/error.hpp"

namespace fedprune::attacks {

nn::ParamSet attacker_local_train(const nn::ParamSet& global, const data::Dataset& shard,
                                  const data::BackdoorSpec& spec, const data::NormStats& norm,
                                  const nn::LocalTraining& cfg, std::uint64_t seed) {
  if (shard.empty()) throw ArgumentError("attacker shard is empty");
  nn::ParamSet local = global;
  const data::Dataset poison = data::poisoned_copies(shard, spec);
  if (poison.empty()) {
    nn::train_local(local, shard, norm, cfg, seed);
    return local;
  }
  data::Dataset mixed = shard;
  mixed.append(poison);
  nn::train_local(local, mixed, norm, cfg, seed);
  return local;
}

nn::ParamSet malicious_update(const nn::ParamSet& x_atk, const nn::ParamSet& global, double alpha) {
  nn::ParamSet delta = nn::difference(x_atk, global);
  if (alpha != 1.0) nn::scale(delta, static_cast<float>(alpha));
  return delta;
}

nn::ParamSet model_replacement(const nn::ParamSet& x_atk, const nn::ParamSet& global, double alpha) {
  if (!(alpha >= 1.0)) throw ArgumentError("amplification alpha must be at least 1");
  if (alpha == 1.0) return x_atk;
  nn::ParamSet out = global;
  nn::add_scaled(out, 1.0f, malicious_update(x_atk, global, alpha));
  out.mask() = x_atk.mask();
  return out;
}

std::vector<int> adversarial_ranking(const std::vector<int>& honest_ranks) {
  const int c = static_cast<int>(honest_ranks.size());
  std::vector<int> out(honest_ranks.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c + 1 - honest_ranks[i];
  return out;
}

nn::ParamSet pruning_aware_train(const nn::ParamSet& global, const data::Dataset& shard,
                                 const data::BackdoorSpec& spec, const nn::ChannelMask& mask,
                                 const data::NormStats& norm, const nn::LocalTraining& cfg, std::uint64_t seed) {
  if (mask.is_identity()) return attacker_local_train(global, shard, spec, norm, cfg, seed);
  return attacker_local_train(nn::apply_channel_mask(global, mask), shard, spec, norm, cfg, seed);
}

}  // namespace fedprune::attacks
