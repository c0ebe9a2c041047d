// SPDX-License-Identifier: Apache-2.0
#pragma once

// Straightforward loop-nest forward pass in double, written independently of
// the library's im2col/GEMM path. `kept` lists the designated-layer channels
// that exist; the others are treated as absent from the network.

#include <algorithm>
#include <vector>

#include "fedprune/model.hpp"

namespace testutil {

struct NaiveOut {
  std::vector<double> logits;          // classes
  std::vector<double> designated_sums; // per designated channel (0 for absent ones)
};

inline NaiveOut naive_forward(const fedprune::nn::ParamSet& p, const std::vector<double>& image,
                              const std::vector<int>& kept) {
  using fedprune::nn::LayerDesc;
  const auto& spec = p.spec();
  std::vector<double> cur = image;
  NaiveOut out;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerDesc& d = spec.layers[l];
    const auto& w = p.layer(l).weight;
    const auto& b = p.layer(l).bias;
    const bool designated = static_cast<int>(l) == spec.prune_layer;
    std::vector<int> outs;
    for (int o = 0; o < d.out_channels; ++o)
      if (!designated || std::find(kept.begin(), kept.end(), o) != kept.end()) outs.push_back(o);
    const bool after_designated = static_cast<int>(l) == spec.prune_layer + 1;
    auto input_exists = [&](int ci) {
      return !after_designated || std::find(kept.begin(), kept.end(), ci) != kept.end();
    };

    if (d.is_conv()) {
      std::vector<double> act(static_cast<std::size_t>(d.out_channels) * d.out_h * d.out_w, 0.0);
      for (int o : outs)
        for (int y = 0; y < d.out_h; ++y)
          for (int x = 0; x < d.out_w; ++x) {
            double s = b[static_cast<std::size_t>(o)];
            for (int ci = 0; ci < d.in_channels; ++ci) {
              if (!input_exists(ci)) continue;
              for (int ky = 0; ky < d.kernel; ++ky)
                for (int kx = 0; kx < d.kernel; ++kx) {
                  const int iy = y + ky - d.pad, ix = x + kx - d.pad;
                  if (iy < 0 || iy >= d.in_h || ix < 0 || ix >= d.in_w) continue;
                  s += w[((static_cast<std::size_t>(o) * d.in_channels + ci) * d.kernel + ky) * d.kernel + kx] *
                       cur[(static_cast<std::size_t>(ci) * d.in_h + iy) * d.in_w + ix];
                }
            }
            act[(static_cast<std::size_t>(o) * d.out_h + y) * d.out_w + x] = std::max(0.0, s);
          }
      if (designated) {
        out.designated_sums.assign(static_cast<std::size_t>(d.out_channels), 0.0);
        for (int o : outs)
          for (int i = 0; i < d.out_h * d.out_w; ++i)
            out.designated_sums[static_cast<std::size_t>(o)] += act[static_cast<std::size_t>(o) * d.out_h * d.out_w + i];
      }
      if (d.pool) {
        std::vector<double> pooled(static_cast<std::size_t>(d.out_channels) * d.pooled_h * d.pooled_w, 0.0);
        for (int o = 0; o < d.out_channels; ++o)
          for (int y = 0; y < d.pooled_h; ++y)
            for (int x = 0; x < d.pooled_w; ++x) {
              double m = -1e300;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                  m = std::max(m, act[(static_cast<std::size_t>(o) * d.out_h + 2 * y + dy) * d.out_w + 2 * x + dx]);
              pooled[(static_cast<std::size_t>(o) * d.pooled_h + y) * d.pooled_w + x] = m;
            }
        cur = std::move(pooled);
      } else {
        cur = std::move(act);
      }
    } else {
      const LayerDesc& prev = spec.layers[l - 1];
      const int block = prev.is_conv() ? prev.pooled_h * prev.pooled_w : 1;
      std::vector<double> next(static_cast<std::size_t>(d.out_channels));
      for (int o = 0; o < d.out_channels; ++o) {
        double s = b[static_cast<std::size_t>(o)];
        for (int i = 0; i < d.in_channels; ++i) {
          if (!input_exists(i / block)) continue;
          s += w[static_cast<std::size_t>(o) * d.in_channels + i] * cur[static_cast<std::size_t>(i)];
        }
        next[static_cast<std::size_t>(o)] = d.relu ? std::max(0.0, s) : s;
      }
      cur = std::move(next);
    }
  }
  out.logits = cur;
  return out;
}

inline std::vector<int> all_channels(int c) {
  std::vector<int> v(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace testutil
