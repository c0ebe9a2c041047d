// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fedprune/backdoor.hpp"
#include "fedprune/dataset.hpp"
#include "fedprune/model.hpp"
#include "fedprune/network.hpp"

namespace fedprune::attacks {

/// Local training on the clean shard plus triggered copies relabelled F, in
/// mixed shuffled batches. The shard itself is not modified.
nn::ParamSet attacker_local_train(const nn::ParamSet& global, const data::Dataset& shard,
                                  const data::BackdoorSpec& spec, const data::NormStats& norm,
                                  const nn::LocalTraining& cfg, std::uint64_t seed);

/// alpha * (x_atk - global) + global. alpha == 1 returns x_atk unchanged.
nn::ParamSet model_replacement(const nn::ParamSet& x_atk, const nn::ParamSet& global, double alpha);

/// The update the attacker submits: alpha * (x_atk - global).
nn::ParamSet malicious_update(const nn::ParamSet& x_atk, const nn::ParamSet& global, double alpha);

/// Reverses an honest ranking: rank r becomes C + 1 - r.
std::vector<int> adversarial_ranking(const std::vector<int>& honest_ranks);

/// attacker_local_train with the mask applied to the starting model, so the
/// backdoor is learned only by channels that survive pruning.
nn::ParamSet pruning_aware_train(const nn::ParamSet& global, const data::Dataset& shard,
                                 const data::BackdoorSpec& spec, const nn::ChannelMask& mask,
                                 const data::NormStats& norm, const nn::LocalTraining& cfg, std::uint64_t seed);

}  // namespace fedprune::attacks
