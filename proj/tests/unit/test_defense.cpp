// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fedprune/defense.hpp"
#include "fedprune/error.hpp"
#include "helpers.hpp"

using namespace fedprune;
using nn::ModelId;
using nn::ModelSpec;

namespace {

// Rank by counting: 1 + number of channels that sort before c.
std::vector<int> counting_ranks(const std::vector<double>& a) {
  std::vector<int> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    int before = 0;
    for (std::size_t j = 0; j < a.size(); ++j)
      if (a[j] < a[i] || (a[j] == a[i] && j < i)) ++before;
    r[i] = before + 1;
  }
  return r;
}

// Selection by repeated minimum of the summed key.
std::vector<int> selection_order(const std::vector<long long>& key) {
  std::vector<int> out;
  std::vector<bool> used(key.size(), false);
  for (std::size_t n = 0; n < key.size(); ++n) {
    int best = -1;
    for (std::size_t c = 0; c < key.size(); ++c)
      if (!used[c] && (best < 0 || key[c] < key[static_cast<std::size_t>(best)])) best = static_cast<int>(c);
    used[static_cast<std::size_t>(best)] = true;
    out.push_back(best);
  }
  return out;
}

std::vector<double> random_activations(Rng& rng, int c) {
  std::vector<double> a(static_cast<std::size_t>(c));
  for (auto& v : a) v = static_cast<double>(rng.below(4));  // frequent ties
  return a;
}

}  // namespace

TEST_CASE("rankings and votes agree with brute-force oracles") {
  Rng rng(77);
  for (int inst = 0; inst < 300; ++inst) {
    const int c = 1 + static_cast<int>(rng.below(10));
    const int n = 1 + static_cast<int>(rng.below(10));
    std::vector<defense::NeuronRanking> rankings;
    std::vector<defense::VoteMask> votes;
    std::vector<long long> rank_sum(static_cast<std::size_t>(c), 0), vote_sum(static_cast<std::size_t>(c), 0);
    for (int k = 0; k < n; ++k) {
      const auto a = random_activations(rng, c);
      const auto expected = counting_ranks(a);
      rankings.push_back(defense::rank_neurons(a));
      REQUIRE(rankings.back().ranks == expected);
      for (int i = 0; i < c; ++i) rank_sum[static_cast<std::size_t>(i)] += expected[static_cast<std::size_t>(i)];

      votes.push_back(defense::vote_mask(a, 0.5));
      const int zeros = c / 2;
      for (int i = 0; i < c; ++i) {
        const int bit = expected[static_cast<std::size_t>(i)] <= zeros ? 0 : 1;
        REQUIRE(votes.back().bits[static_cast<std::size_t>(i)] == bit);
        vote_sum[static_cast<std::size_t>(i)] += bit;
      }
    }
    CHECK(defense::aggregate_rankings(rankings) == selection_order(rank_sum));
    CHECK(defense::aggregate_votes(votes) == selection_order(vote_sum));
  }
}

TEST_CASE("ranking edge cases") {
  CHECK(defense::rank_neurons(std::vector<double>{2.0, 2.0, 2.0}).ranks == std::vector<int>{1, 2, 3});
  CHECK(defense::rank_neurons(std::vector<double>{5.0, 0.0, 1.0}).ranks == std::vector<int>{3, 1, 2});
  std::vector<defense::NeuronRanking> bad{{{1, 2}}, {{1, 2, 3}}};
  CHECK_THROWS_AS(defense::aggregate_rankings(bad), ProtocolError);
  CHECK(defense::vote_mask(std::vector<double>{4, 3, 2, 1}, 0.25).bits == std::vector<std::uint8_t>{1, 1, 1, 0});
  CHECK_THROWS_AS(defense::vote_mask(std::vector<double>{1, 2}, 0.0), ArgumentError);
  CHECK_THROWS_AS(defense::vote_mask(std::vector<double>{1, 2}, 1.0), ArgumentError);
}

TEST_CASE("testing points and stop rule") {
  CHECK(defense::default_prune_step(50) == 2);
  CHECK(defense::default_prune_step(16) == 1);
  CHECK(defense::testing_points(5, 2) == std::vector<int>{0, 2, 4, 5});
  CHECK(defense::testing_points(4, 2) == std::vector<int>{0, 2, 4});
  const std::vector<double> acc{0.98, 0.98, 0.975, 0.96, 0.5};
  CHECK(defense::find_stop(acc, 0.01) == 2);
  const std::vector<double> flat{0.9, 0.9, 0.9};
  CHECK(defense::find_stop(flat, 0.01) == 2);
  const std::vector<double> first{0.9, 0.5};
  CHECK(defense::find_stop(first, 0.01) == 0);

  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  const std::vector<int> order{3, 1, 15, 0};
  const auto m = defense::prefix_mask(spec, order, 2);
  CHECK(m.pruned_count() == 2);
  CHECK_FALSE(m.kept(3));
  CHECK_FALSE(m.kept(1));
  CHECK(m.kept(15));
}

TEST_CASE("iterative pruning on a model that ignores the input prunes everything") {
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  const auto p = nn::ParamSet(spec);
  const auto val = testutil::random_dataset(30, 3);
  std::vector<int> order(16);
  std::iota(order.begin(), order.end(), 0);
  int observed = 0;
  const auto r = defense::iterative_prune(p, order, val, testutil::unit_norm(), 0.01, 4,
                                          [&](int, const nn::ParamSet&) { ++observed; });
  CHECK(r.state.pruned == 16);
  CHECK(r.state.mask.pruned_count() == 16);
  CHECK(observed == 5);
  CHECK(r.state.points.size() == 5);
  CHECK(r.params.mask() == r.state.mask);
  CHECK(r.state.report().find("16,") != std::string::npos);
}

TEST_CASE("iterative pruning rolls back a harmful step") {
  // Train a tiny model until it fits a small set, then prune in an order whose
  // complete removal must destroy accuracy.
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  auto p = nn::init_params(spec, 9);
  const auto val = testutil::random_dataset(20, 4);
  nn::train_local(p, val, testutil::unit_norm(), {30, 10, 0.05f, 0.0f, -1}, 1);
  const double base = nn::evaluate(p, val, testutil::unit_norm()).accuracy;
  REQUIRE(base > 0.5);
  std::vector<int> order(16);
  std::iota(order.begin(), order.end(), 0);
  const auto r = defense::iterative_prune(p, order, val, testutil::unit_norm(), 0.01, 16);
  CHECK(r.state.pruned == 0);
  CHECK(nn::bitwise_equal(r.params, p));
  CHECK(r.state.points.size() == 2);
}

TEST_CASE("extreme-weight adjustment matches an independent count") {
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  for (double delta : {0.5, 1.0, 2.0, 3.0}) {
    auto p = testutil::random_params(spec, 10, 0.5);
    const auto before = p;
    const auto layer = static_cast<std::size_t>(spec.prune_layer);
    const auto& w = before.layer(layer).weight;
    long double sum = 0, sq = 0;
    for (float v : w) sum += v;
    const long double mu = sum / w.size();
    for (float v : w) sq += (v - mu) * (v - mu);
    const long double sd = std::sqrt(sq / w.size());
    std::size_t expected = 0;
    for (float v : w)
      if (v < mu - delta * sd || v > mu + delta * sd) ++expected;

    const auto res = defense::adjust_extreme_weights(p, spec.prune_layer, delta);
    CHECK(res.zeroed == expected);
    CHECK(res.mean == doctest::Approx(static_cast<double>(mu)));
    CHECK(res.stddev == doctest::Approx(static_cast<double>(sd)));
    const auto& after = p.layer(layer).weight;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const bool extreme = w[i] < mu - delta * sd || w[i] > mu + delta * sd;
      CHECK(after[i] == (extreme ? 0.0f : w[i]));
    }
    CHECK(p.layer(layer).bias == before.layer(layer).bias);
    for (std::size_t l = 0; l < spec.layers.size(); ++l)
      if (l != layer) CHECK(p.layer(l).weight == before.layer(l).weight);
  }
}

TEST_CASE("extreme-weight statistics ignore pruned filters") {
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  auto mask = nn::ChannelMask::all_keep(spec);
  for (int c = 0; c < 12; ++c) mask.keep[static_cast<std::size_t>(c)] = 0;
  auto p = nn::apply_channel_mask(testutil::random_params(spec, 14, 0.5), mask);
  const auto layer = static_cast<std::size_t>(spec.prune_layer);
  const auto before = p.layer(layer).weight;
  const std::size_t filter = before.size() / 16;
  std::vector<double> live(before.begin() + static_cast<std::ptrdiff_t>(12 * filter), before.end());
  const double mu = std::accumulate(live.begin(), live.end(), 0.0) / static_cast<double>(live.size());
  double sq = 0.0;
  for (double v : live) sq += (v - mu) * (v - mu);
  const double sd = std::sqrt(sq / static_cast<double>(live.size()));
  std::size_t expected = 0;
  for (double v : live) expected += v < mu - 2 * sd || v > mu + 2 * sd;

  const auto res = defense::adjust_extreme_weights(p, spec.prune_layer, 2.0);
  CHECK(res.mean == doctest::Approx(mu));
  CHECK(res.stddev == doctest::Approx(sd));
  CHECK(res.zeroed == expected);
  CHECK(nn::bitwise_equal(p, nn::apply_channel_mask(p, mask)));

  for (int c = 0; c < 16; ++c) mask.keep[static_cast<std::size_t>(c)] = 0;
  auto dead = nn::apply_channel_mask(p, mask);
  CHECK_THROWS_AS(defense::adjust_extreme_weights(dead, spec.prune_layer, 2.0), DegenerateError);
}

TEST_CASE("huge delta leaves the model bit-identical and constant weights are degenerate") {
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  auto p = testutil::random_params(spec, 11, 0.5);
  const auto before = p;
  CHECK(defense::adjust_extreme_weights(p, spec.prune_layer, 1e9).zeroed == 0);
  CHECK(nn::bitwise_equal(p, before));
  nn::ParamSet zero(spec);
  CHECK_THROWS_AS(defense::adjust_extreme_weights(zero, spec.prune_layer, 3.0), DegenerateError);
}

TEST_CASE("delta sweep") {
  CHECK(defense::default_delta_grid().front() == 5.0);
  CHECK(defense::default_delta_grid().back() == 1.0);
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  auto p = nn::init_params(spec, 12);
  const auto val = testutil::random_dataset(20, 5);
  nn::train_local(p, val, testutil::unit_norm(), {30, 10, 0.05f, 0.0f, -1}, 2);
  const std::vector<double> grid{1e9, 1e8};
  const auto easy = defense::sweep_delta(p, val, testutil::unit_norm(), grid, 0.01);
  CHECK(easy.delta == 1e8);
  CHECK(easy.points.size() == 2);
  const std::vector<double> harsh{1e-6};
  const auto r = defense::sweep_delta(p, val, testutil::unit_norm(), harsh, -1.0);
  CHECK(r.delta == defense::kNoAdjustment);
}

TEST_CASE("client profiles are mean activations") {
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  const auto p = testutil::random_params(spec, 13, 0.2);
  const auto shard = testutil::random_dataset(7, 6);
  const auto prof = defense::client_profile(p, shard, testutil::unit_norm(), 3);
  const auto totals = nn::channel_activation_totals(p, shard, testutil::unit_norm());
  CHECK(prof.client == 3);
  CHECK(prof.images == 7);
  CHECK(prof.layer == spec.prune_layer);
  for (std::size_t c = 0; c < totals.size(); ++c) CHECK(prof.mean[c] == doctest::Approx(totals[c] / 7.0));
}

TEST_CASE("client feedback pruning with honest and lying clients") {
  const auto& spec = ModelSpec::get(ModelId::mnist_small);
  const auto p = nn::ParamSet(spec);
  const auto ds = testutil::random_dataset(40, 7);
  const auto shards = data::partition_k_label(ds, 4, 5, 1);
  std::vector<int> order(16);
  std::iota(order.begin(), order.end(), 0);
  CHECK(defense::client_feedback_prune(order, shards, p, testutil::unit_norm(), 0.01, 4) == 16);
  const auto lie = [](int, int pruned, double honest) { return pruned >= 8 ? 0.0 : honest; };
  CHECK(defense::client_feedback_prune(order, shards, p, testutil::unit_norm(), 0.01, 4, lie) == 4);
}
