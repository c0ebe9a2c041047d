// SPDX-License-Identifier: Apache-2.0
#include "fedprune/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedprune/error.hpp"
#include "fedprune/kernels.hpp"
#include "fedprune/rng.hpp"

namespace fedprune::nn {
namespace {

constexpr int kEvalBatch = 250;

template <class T>
void im2col(const T* in, const LayerDesc& d, T* col) {
  const int k = d.kernel, pad = d.pad;
  const int oh = d.out_h, ow = d.out_w, ih = d.in_h, iw = d.in_w;
  for (int c = 0; c < d.in_channels; ++c) {
    const T* plane = in + static_cast<std::ptrdiff_t>(c) * ih * iw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy + ky - pad;
          T* dst = row + static_cast<std::ptrdiff_t>(oy) * ow;
          if (y < 0 || y >= ih) {
            std::fill_n(dst, ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::ptrdiff_t>(y) * iw;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox + kx - pad;
            dst[ox] = (x >= 0 && x < iw) ? src[x] : T(0);
          }
        }
      }
    }
  }
}

// Same patches as im2col, laid out one output position per row: colT[S][K].
template <class T>
void im2col_t(const T* in, const LayerDesc& d, T* colt) {
  const int k = d.kernel, pad = d.pad;
  const int oh = d.out_h, ow = d.out_w, ih = d.in_h, iw = d.in_w;
  const int kdim = d.fan_in();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* row = colt + static_cast<std::ptrdiff_t>(oy * ow + ox) * kdim;
      for (int c = 0; c < d.in_channels; ++c) {
        const T* plane = in + static_cast<std::ptrdiff_t>(c) * ih * iw;
        for (int ky = 0; ky < k; ++ky) {
          const int y = oy + ky - pad;
          T* dst = row + (c * k + ky) * k;
          if (y < 0 || y >= ih) {
            std::fill_n(dst, k, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::ptrdiff_t>(y) * iw;
          for (int kx = 0; kx < k; ++kx) {
            const int x = ox + kx - pad;
            dst[kx] = (x >= 0 && x < iw) ? src[x] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const LayerDesc& d, T* in) {
  const int k = d.kernel, pad = d.pad;
  const int oh = d.out_h, ow = d.out_w, ih = d.in_h, iw = d.in_w;
  for (int c = 0; c < d.in_channels; ++c) {
    T* plane = in + static_cast<std::ptrdiff_t>(c) * ih * iw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy + ky - pad;
          if (y < 0 || y >= ih) continue;
          T* dst = plane + static_cast<std::ptrdiff_t>(y) * iw;
          const T* src = row + static_cast<std::ptrdiff_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox + kx - pad;
            if (x >= 0 && x < iw) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
void maxpool2(const T* in, int channels, int h, int w, T* out, int* idx) {
  const int ph = h / 2, pw = w / 2;
  for (int c = 0; c < channels; ++c) {
    const T* plane = in + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int py = 0; py < ph; ++py) {
      for (int px = 0; px < pw; ++px) {
        int best = (2 * py) * w + 2 * px;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int cand = (2 * py + dy) * w + 2 * px + dx;
            if (plane[cand] > plane[best]) best = cand;
          }
        *out++ = plane[best];
        *idx++ = c * h * w + best;
      }
    }
  }
}

template <class T>
T cross_entropy_row(const T* logits, int classes, int label, T* probs_out) {
  T peak = logits[0];
  for (int j = 1; j < classes; ++j) peak = std::max(peak, logits[j]);
  T total = 0;
  for (int j = 0; j < classes; ++j) total += std::exp(logits[j] - peak);
  const T log_z = peak + std::log(total);
  if (probs_out != nullptr)
    for (int j = 0; j < classes; ++j) probs_out[j] = std::exp(logits[j] - log_z);
  return log_z - logits[label];
}

template <class T>
T l2_penalty(const BasicParamSet<T>& params, T lambda) {
  if (lambda == T(0)) return T(0);
  T sum = 0;
  for (T w : params.layer(static_cast<std::size_t>(params.spec().prune_layer)).weight) sum += w * w;
  return lambda * sum;
}

void check_input(const ModelSpec& spec, std::size_t elements, int batch) {
  if (batch <= 0) throw ConfigError("batch must contain at least one image");
  if (elements != spec.input_size() * static_cast<std::size_t>(batch))
    throw ConfigError("input has " + std::to_string(elements) + " values, expected " +
                      std::to_string(spec.input_size() * static_cast<std::size_t>(batch)) + " for " +
                      std::to_string(batch) + " images of " + std::to_string(spec.input_size()));
}

}  // namespace

template <class T>
void run_forward(const BasicParamSet<T>& params, std::span<const T> input, int batch, bool record,
                 ForwardState<T>& st) {
  const ModelSpec& spec = params.spec();
  check_input(spec, input.size(), batch);
  const std::size_t nl = spec.layers.size();
  st.batch = batch;
  st.act.resize(nl);
  st.pooled.resize(nl);
  st.argmax.resize(nl);
  st.channel_sums.clear();

  const ChannelMask& mask = params.mask();
  thread_local std::vector<T> col;
  const T* in = input.data();
  for (std::size_t l = 0; l < nl; ++l) {
    const LayerDesc& d = spec.layers[l];
    const auto& p = params.layer(l);
    if (d.is_conv()) {
      const int spatial = d.out_h * d.out_w;
      const int kdim = d.fan_in();
      const std::size_t in_size = static_cast<std::size_t>(d.in_channels) * d.in_h * d.in_w;
      const std::size_t out_size = static_cast<std::size_t>(d.out_channels) * spatial;
      auto& out = st.act[l];
      out.resize(out_size * static_cast<std::size_t>(batch));
      col.resize(static_cast<std::size_t>(kdim) * spatial);
      const bool designated = static_cast<int>(l) == spec.prune_layer;
      const bool masked = designated && !mask.is_identity();
      if (designated && record) st.channel_sums.assign(static_cast<std::size_t>(batch) * d.out_channels, 0.0);
      for (int b = 0; b < batch; ++b) {
        im2col(in + b * in_size, d, col.data());
        T* o = out.data() + b * out_size;
        kernels::gemm_nn(d.out_channels, spatial, kdim, p.weight.data(), kdim, col.data(), spatial, o,
                         spatial, false);
        for (int c = 0; c < d.out_channels; ++c) {
          T* plane = o + static_cast<std::ptrdiff_t>(c) * spatial;
          if (masked && !mask.kept(static_cast<std::size_t>(c))) {
            std::fill_n(plane, spatial, T(0));
            continue;
          }
          const T bias = p.bias[static_cast<std::size_t>(c)];
          for (int s = 0; s < spatial; ++s) plane[s] = std::max(plane[s] + bias, T(0));
          if (designated && record) {
            double sum = 0.0;
            for (int s = 0; s < spatial; ++s) sum += static_cast<double>(plane[s]);
            st.channel_sums[static_cast<std::size_t>(b) * d.out_channels + c] = sum;
          }
        }
      }
      if (d.pool) {
        const std::size_t pooled_size = d.output_size();
        st.pooled[l].resize(pooled_size * batch);
        st.argmax[l].resize(pooled_size * batch);
        for (int b = 0; b < batch; ++b)
          maxpool2(out.data() + b * out_size, d.out_channels, d.out_h, d.out_w,
                   st.pooled[l].data() + b * pooled_size, st.argmax[l].data() + b * pooled_size);
      }
    } else {
      auto& out = st.act[l];
      const int fin = d.in_channels, fout = d.out_channels;
      out.resize(static_cast<std::size_t>(batch) * fout);
      kernels::gemm_nt(batch, fout, fin, in, fin, p.weight.data(), fin, out.data(), fout, false);
      for (int b = 0; b < batch; ++b) {
        T* row = out.data() + static_cast<std::ptrdiff_t>(b) * fout;
        for (int j = 0; j < fout; ++j) {
          row[j] += p.bias[static_cast<std::size_t>(j)];
          if (d.relu) row[j] = std::max(row[j], T(0));
        }
      }
    }
    in = st.output(spec, l).data();
  }
}

template <class T>
T backward(const BasicParamSet<T>& params, std::span<const T> input, std::span<const int> labels,
           const ForwardState<T>& st, T lambda, BasicParamSet<T>& grad) {
  const ModelSpec& spec = params.spec();
  const int batch = st.batch;
  if (static_cast<int>(labels.size()) != batch) throw ConfigError("label count does not match batch");
  if (!grad.same_layout(params)) grad = BasicParamSet<T>(spec);
  const std::size_t nl = spec.layers.size();
  const int classes = spec.classes;

  // d(loss)/d(logits)
  std::vector<T> delta(static_cast<std::size_t>(batch) * classes);
  T loss = 0;
  const auto& logits = st.logits();
  for (int b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= classes) throw ConfigError("label " + std::to_string(y) + " out of range");
    T* row = delta.data() + static_cast<std::ptrdiff_t>(b) * classes;
    loss += cross_entropy_row(logits.data() + static_cast<std::ptrdiff_t>(b) * classes, classes, y, row);
    row[y] -= T(1);
  }
  const T inv_batch = T(1) / static_cast<T>(batch);
  for (T& v : delta) v *= inv_batch;

  thread_local std::vector<T> col, dcol, dprev, dact;
  for (std::size_t li = nl; li-- > 0;) {
    const LayerDesc& d = spec.layers[li];
    const auto& p = params.layer(li);
    auto& g = grad.layer(li);
    const T* in = li == 0 ? input.data() : st.output(spec, li - 1).data();
    const bool need_input_grad = li > 0;

    if (!d.is_conv()) {
      const int fin = d.in_channels, fout = d.out_channels;
      // delta is batch x fout, already through this layer's ReLU.
      kernels::gemm_tn(fout, fin, batch, delta.data(), fout, in, fin, g.weight.data(), fin, false);
      std::fill(g.bias.begin(), g.bias.end(), T(0));
      for (int b = 0; b < batch; ++b)
        for (int j = 0; j < fout; ++j) g.bias[static_cast<std::size_t>(j)] += delta[static_cast<std::size_t>(b) * fout + j];
      if (need_input_grad) {
        dprev.resize(static_cast<std::size_t>(batch) * fin);
        kernels::gemm_nn(batch, fin, fout, delta.data(), fout, p.weight.data(), fin, dprev.data(), fin, false);
      }
    } else {
      const int spatial = d.out_h * d.out_w;
      const int kdim = d.fan_in();
      const std::size_t out_size = static_cast<std::size_t>(d.out_channels) * spatial;
      const std::size_t in_size = static_cast<std::size_t>(d.in_channels) * d.in_h * d.in_w;
      // Expand the pooled delta back to the pre-pool plane.
      if (d.pool) {
        dact.assign(out_size * batch, T(0));
        const std::size_t pooled_size = d.output_size();
        const auto& idx = st.argmax[li];
        for (int b = 0; b < batch; ++b)
          for (std::size_t q = 0; q < pooled_size; ++q)
            dact[b * out_size + static_cast<std::size_t>(idx[b * pooled_size + q])] += delta[b * pooled_size + q];
      } else {
        dact.assign(delta.begin(), delta.end());
      }
      const auto& act = st.act[li];
      for (std::size_t i = 0; i < dact.size(); ++i)
        if (!(act[i] > T(0))) dact[i] = T(0);
      const bool designated = static_cast<int>(li) == spec.prune_layer;
      if (designated && !params.mask().is_identity()) {
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < d.out_channels; ++c)
            if (!params.mask().kept(static_cast<std::size_t>(c)))
              std::fill_n(dact.begin() + static_cast<std::ptrdiff_t>(b * out_size + static_cast<std::size_t>(c) * spatial),
                          spatial, T(0));
      }

      std::fill(g.weight.begin(), g.weight.end(), T(0));
      std::fill(g.bias.begin(), g.bias.end(), T(0));
      col.resize(static_cast<std::size_t>(kdim) * spatial);
      if (need_input_grad) {
        dcol.resize(col.size());
        dprev.assign(in_size * batch, T(0));
      }
      for (int b = 0; b < batch; ++b) {
        const T* db = dact.data() + b * out_size;
        for (int c = 0; c < d.out_channels; ++c) {
          T s = 0;
          for (int q = 0; q < spatial; ++q) s += db[static_cast<std::ptrdiff_t>(c) * spatial + q];
          g.bias[static_cast<std::size_t>(c)] += s;
        }
        im2col_t(in + b * in_size, d, col.data());
        kernels::gemm_nn(d.out_channels, kdim, spatial, db, spatial, col.data(), kdim, g.weight.data(), kdim,
                         true);
        if (need_input_grad) {
          kernels::gemm_tn(kdim, spatial, d.out_channels, p.weight.data(), kdim, db, spatial, dcol.data(), spatial,
                           false);
          col2im_add(dcol.data(), d, dprev.data() + b * in_size);
        }
      }
    }

    if (need_input_grad) {
      // Through the previous layer's ReLU (conv ReLU is handled above on its own plane).
      const LayerDesc& prev = spec.layers[li - 1];
      if (!prev.is_conv() && prev.relu) {
        const auto& pa = st.act[li - 1];
        for (std::size_t i = 0; i < dprev.size(); ++i)
          if (!(pa[i] > T(0))) dprev[i] = T(0);
      }
      delta.swap(dprev);
    }
  }

  if (lambda != T(0)) {
    const auto pl = static_cast<std::size_t>(spec.prune_layer);
    const auto& w = params.layer(pl).weight;
    auto& gw = grad.layer(pl).weight;
    for (std::size_t i = 0; i < w.size(); ++i) gw[i] += T(2) * lambda * w[i];
  }
  if (!params.mask().is_identity()) zero_masked(grad, params.mask());
  return loss * inv_batch;
}

template <class T>
T objective(const BasicParamSet<T>& params, std::span<const T> input, std::span<const int> labels, T lambda) {
  ForwardState<T> st;
  const int batch = static_cast<int>(labels.size());
  run_forward(params, input, batch, false, st);
  T loss = 0;
  const int classes = params.spec().classes;
  for (int b = 0; b < batch; ++b)
    loss += cross_entropy_row(st.logits().data() + static_cast<std::ptrdiff_t>(b) * classes, classes,
                              labels[static_cast<std::size_t>(b)], static_cast<T*>(nullptr));
  return loss / static_cast<T>(batch) + l2_penalty(params, lambda);
}

template void run_forward(const BasicParamSet<float>&, std::span<const float>, int, bool, ForwardState<float>&);
template void run_forward(const BasicParamSet<double>&, std::span<const double>, int, bool, ForwardState<double>&);
template float backward(const BasicParamSet<float>&, std::span<const float>, std::span<const int>,
                        const ForwardState<float>&, float, BasicParamSet<float>&);
template double backward(const BasicParamSet<double>&, std::span<const double>, std::span<const int>,
                         const ForwardState<double>&, double, BasicParamSet<double>&);
template float objective(const BasicParamSet<float>&, std::span<const float>, std::span<const int>, float);
template double objective(const BasicParamSet<double>&, std::span<const double>, std::span<const int>, double);

ForwardResult forward(const ParamSet& params, std::span<const float> batch, int n, bool record) {
  ForwardState<float> st;
  run_forward(params, batch, n, record, st);
  return ForwardResult{n, st.logits(), std::move(st.channel_sums)};
}

float train_step(ParamSet& params, std::span<const float> batch, std::span<const int> labels, float lr,
                 float lambda_last_conv, StepTag tag) {
  if (!(lr > 0.0f)) throw ArgumentError("learning rate must be positive");
  if (labels.empty()) throw ArgumentError("training batch is empty");
  if (lambda_last_conv < 0.0f) throw ArgumentError("lambda_last_conv must be nonnegative");
  thread_local ForwardState<float> st;
  thread_local ParamSet grad;
  run_forward(params, batch, static_cast<int>(labels.size()), false, st);
  const float loss = backward(params, batch, labels, st, lambda_last_conv, grad);
  if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", tag.round, tag.batch);
  add_scaled(params, -lr, grad);
  return loss;
}

double train_local(ParamSet& params, const data::Dataset& dataset, const data::NormStats& norm,
                   const LocalTraining& cfg, std::uint64_t seed) {
  if (dataset.empty()) throw ArgumentError("local training set is empty");
  if (cfg.batch_size <= 0) throw ArgumentError("batch size must be positive");
  Rng rng(seed);
  std::vector<std::size_t> order(dataset.size());
  std::vector<float> x;
  std::vector<int> y;
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> idx(order.data() + start, end - start);
      data::normalize_into(dataset, idx, norm, x);
      y.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = dataset.label(idx[i]);
      loss_sum += train_step(params, x, y, cfg.lr, cfg.lambda_last_conv,
                             StepTag{cfg.round, static_cast<int>(steps)});
      ++steps;
    }
  }
  if (!params.all_finite()) throw DivergenceError("non-finite parameters after local training", cfg.round, -1);
  return steps ? loss_sum / static_cast<double>(steps) : 0.0;
}

int argmax(std::span<const float> logits) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(logits.size()); ++j)
    if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(best)]) best = j;
  return best;
}

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (float v : logits) peak = std::max(peak, static_cast<double>(v));
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) total += p[j] = std::exp(static_cast<double>(logits[j]) - peak);
  for (double& v : p) v /= total;
  return p;
}

namespace {

// Runs the network over `dataset` in fixed-size chunks, in order.
template <class Fn>
void for_each_chunk(const ParamSet& params, const data::Dataset& dataset, const data::NormStats& norm, bool record,
                    Fn&& fn) {
  ForwardState<float> st;
  std::vector<float> x;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += kEvalBatch) {
    const std::size_t end = std::min(dataset.size(), start + kEvalBatch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    data::normalize_into(dataset, idx, norm, x);
    run_forward(params, std::span<const float>(x), static_cast<int>(idx.size()), record, st);
    fn(start, static_cast<int>(idx.size()), st);
  }
}

}  // namespace

EvalResult evaluate(const ParamSet& params, const data::Dataset& dataset, const data::NormStats& norm) {
  if (dataset.empty()) throw ArgumentError("cannot evaluate on an empty dataset");
  const int classes = params.spec().classes;
  EvalResult r;
  double loss = 0.0;
  for_each_chunk(params, dataset, norm, false, [&](std::size_t start, int n, const ForwardState<float>& st) {
    for (int b = 0; b < n; ++b) {
      std::span<const float> row(st.logits().data() + static_cast<std::ptrdiff_t>(b) * classes,
                                 static_cast<std::size_t>(classes));
      const int label = dataset.label(start + static_cast<std::size_t>(b));
      if (argmax(row) == label) ++r.correct;
      loss += cross_entropy_row(row.data(), classes, label, static_cast<float*>(nullptr));
    }
  });
  r.total = dataset.size();
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.loss = loss / static_cast<double>(r.total);
  return r;
}

std::vector<int> predict(const ParamSet& params, const data::Dataset& dataset, const data::NormStats& norm) {
  std::vector<int> out(dataset.size());
  const int classes = params.spec().classes;
  for_each_chunk(params, dataset, norm, false, [&](std::size_t start, int n, const ForwardState<float>& st) {
    for (int b = 0; b < n; ++b)
      out[start + static_cast<std::size_t>(b)] =
          argmax({st.logits().data() + static_cast<std::ptrdiff_t>(b) * classes, static_cast<std::size_t>(classes)});
  });
  return out;
}

std::vector<double> channel_activation_totals(const ParamSet& params, const data::Dataset& dataset,
                                              const data::NormStats& norm) {
  const auto channels = static_cast<std::size_t>(params.spec().designated().out_channels);
  std::vector<double> totals(channels, 0.0);
  for_each_chunk(params, dataset, norm, true, [&](std::size_t, int n, const ForwardState<float>& st) {
    for (int b = 0; b < n; ++b)
      for (std::size_t c = 0; c < channels; ++c) totals[c] += st.channel_sums[static_cast<std::size_t>(b) * channels + c];
  });
  return totals;
}

}  // namespace fedprune::nn
