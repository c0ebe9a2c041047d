// SPDX-License-Identifier: Apache-2.0
#include "fedprune/partition.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fedprune/error.hpp"
#include "fedprune/rng.hpp"

namespace fedprune::data {

std::vector<std::vector<int>> assign_labels(int clients, int labels_per_client, std::uint64_t seed) {
  if (clients < 1) throw ConfigError("need at least one client");
  if (labels_per_client < 1 || labels_per_client > 10)
    throw ConfigError("labels per client must be in [1, 10], got " + std::to_string(labels_per_client));
  if (clients * labels_per_client < 10)
    throw ConfigError(std::to_string(clients) + " clients with " + std::to_string(labels_per_client) +
                      " labels each cannot cover all 10 labels");
  Rng rng(derive_seed(seed, {0x9a27}));
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<int>(perm));
  std::vector<int> order(static_cast<std::size_t>(clients));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<int>(order));

  std::vector<std::vector<int>> out(static_cast<std::size_t>(clients));
  int cursor = 0;
  for (int slot = 0; slot < clients; ++slot) {
    auto& labels = out[static_cast<std::size_t>(order[static_cast<std::size_t>(slot)])];
    for (int j = 0; j < labels_per_client; ++j) labels.push_back(perm[static_cast<std::size_t>(cursor++ % 10)]);
    std::sort(labels.begin(), labels.end());
  }
  return out;
}

std::vector<ClientShard> partition_k_label(const Dataset& ds, int clients, int labels_per_client,
                                           std::uint64_t seed) {
  const auto labels = assign_labels(clients, labels_per_client, seed);
  std::vector<std::vector<int>> holders(10);
  for (int c = 0; c < clients; ++c)
    for (int l : labels[static_cast<std::size_t>(c)]) holders[static_cast<std::size_t>(l)].push_back(c);

  std::vector<std::vector<std::size_t>> by_label(10);
  for (std::size_t i = 0; i < ds.size(); ++i) by_label[static_cast<std::size_t>(ds.label(i))].push_back(i);

  std::vector<std::vector<std::size_t>> picks(static_cast<std::size_t>(clients));
  for (std::size_t l = 0; l < 10; ++l) {
    auto& idx = by_label[l];
    Rng rng(derive_seed(seed, {0x9a28, l}));
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t h = holders[l].size();
    const std::size_t base = idx.size() / h, extra = idx.size() % h;
    std::size_t at = 0;
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t take = base + (j < extra ? 1 : 0);
      auto& dst = picks[static_cast<std::size_t>(holders[l][j])];
      dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(at),
                 idx.begin() + static_cast<std::ptrdiff_t>(at + take));
      at += take;
    }
  }

  std::vector<ClientShard> shards(static_cast<std::size_t>(clients));
  for (std::size_t c = 0; c < shards.size(); ++c) {
    std::sort(picks[c].begin(), picks[c].end());
    shards[c].id = static_cast<int>(c);
    shards[c].data = ds.subset(picks[c]);
    shards[c].source_index = std::move(picks[c]);
  }
  return shards;
}

}  // namespace fedprune::data
