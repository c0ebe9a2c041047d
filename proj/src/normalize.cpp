// SPDX-License-Identifier: Apache-2.0
#include "fedprune/normalize.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedprune/error.hpp"

namespace fedprune::data {

NormStats compute_norm_stats(const Dataset& ds) {
  if (ds.empty()) throw ArgumentError("cannot compute statistics of an empty dataset");
  const std::size_t plane = static_cast<std::size_t>(ds.height()) * ds.width();
  NormStats stats;
  for (int c = 0; c < ds.channels(); ++c) {
    std::uint64_t sum = 0, sq = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t* p = ds.pixels(i).data() + static_cast<std::size_t>(c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum += p[k];
        sq += static_cast<std::uint64_t>(p[k]) * p[k];
      }
    }
    const double n = static_cast<double>(ds.size() * plane);
    const double mean = static_cast<double>(sum) / n;
    const double var = static_cast<double>(sq) / n - mean * mean;
    if (!(var > 0.0)) throw DegenerateError("channel " + std::to_string(c) + " has zero standard deviation");
    stats.mean.push_back(mean / 255.0);
    stats.stddev.push_back(std::sqrt(var) / 255.0);
  }
  return stats;
}

std::vector<float> normalize(const Dataset& ds, const NormStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(ds.channels()) || stats.stddev.size() != stats.mean.size())
    throw ArgumentError("normalization statistics do not match the channel count");
  for (double s : stats.stddev)
    if (!(s > 0.0)) throw DegenerateError("normalization standard deviation must be positive");
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<float> out;
  normalize_into(ds, all, stats, out);
  return out;
}

TestSplit split_validation(const Dataset& official_test, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("validation fraction must be in (0, 1)");
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(official_test.size()) * fraction));
  const std::size_t cut = official_test.size() - n_val;
  return {official_test.slice(0, cut), official_test.slice(cut, official_test.size())};
}

}  // namespace fedprune::data
