// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fedprune/dataset.hpp"

namespace fedprune::data {

struct ClientShard {
  int id = 0;
  Dataset data;
  /// Original dataset index of every image in `data`, ascending.
  std::vector<std::size_t> source_index;

  std::size_t n() const { return data.size(); }
};

/// Label sets for N clients holding K labels each. Walks a seeded permutation
/// of the 10 labels cyclically, so every client gets K distinct labels and
/// every label is held floor(N*K/10) or ceil(N*K/10) times. The client order
/// is shuffled too.
std::vector<std::vector<int>> assign_labels(int clients, int labels_per_client, std::uint64_t seed);

/// K-label non-IID partition. The images of each label are shuffled and cut
/// into near-equal parts, one per holder. Throws ConfigError when N*K < 10.
std::vector<ClientShard> partition_k_label(const Dataset& ds, int clients, int labels_per_client,
                                           std::uint64_t seed);

}  // namespace fedprune::data
