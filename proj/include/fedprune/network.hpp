// SPDX-License-Identifier: Apache-2.0
#pragma once

// Forward pass, backpropagation and plain SGD for the ModelSpec architectures.
// Float math goes through the dispatched kernels; double math (gradient
// checking) uses the scalar reference loops.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedprune/dataset.hpp"
#include "fedprune/model.hpp"

namespace fedprune::nn {

/// Everything the backward pass needs from the forward pass.
template <class T>
struct ForwardState {
  int batch = 0;
  std::vector<std::vector<T>> act;      // per layer: post-ReLU (and post-mask) output, pre-pool
  std::vector<std::vector<T>> pooled;   // conv layers with pooling: pooled output
  std::vector<std::vector<int>> argmax; // conv layers with pooling: winning index per pooled cell
  std::vector<double> channel_sums;     // designated layer, batch x channels, when recorded

  /// Layer l's output as seen by layer l+1.
  const std::vector<T>& output(const ModelSpec& spec, std::size_t l) const {
    return spec.layers[l].pool ? pooled[l] : act[l];
  }
  const std::vector<T>& logits() const { return act.back(); }
};

template <class T>
void run_forward(const BasicParamSet<T>& params, std::span<const T> input, int batch, bool record,
                 ForwardState<T>& state);

/// Backpropagates mean cross-entropy plus lambda * ||W_designated||^2 and
/// writes the gradient into `grad` (same layout as params). Gradients of
/// masked channels are exactly zero. Returns the mean cross-entropy.
template <class T>
T backward(const BasicParamSet<T>& params, std::span<const T> input, std::span<const int> labels,
           const ForwardState<T>& state, T lambda, BasicParamSet<T>& grad);

/// Mean cross-entropy plus the last-conv L2 penalty.
template <class T>
T objective(const BasicParamSet<T>& params, std::span<const T> input, std::span<const int> labels,
            T lambda);

struct ForwardResult {
  int batch = 0;
  std::vector<float> logits;         // batch x 10
  std::vector<double> channel_sums;  // batch x C of the designated layer, empty unless recorded
};

ForwardResult forward(const ParamSet& params, std::span<const float> batch, int n, bool record);

struct StepTag {
  int round = -1;
  int batch = -1;
};

/// One SGD step; returns the batch's mean cross-entropy (penalty excluded).
/// Throws DivergenceError if the loss is not finite.
float train_step(ParamSet& params, std::span<const float> batch, std::span<const int> labels,
                 float lr, float lambda_last_conv, StepTag tag = {});

struct LocalTraining {
  int epochs = 1;
  int batch_size = 32;
  float lr = 0.05f;
  float lambda_last_conv = 0.0f;
  int round = -1;  // reported in divergence errors
};

/// Shuffled mini-batch SGD over `data` for the configured epochs. The batch
/// order depends only on `seed`. Returns the mean loss over all steps.
double train_local(ParamSet& params, const data::Dataset& data, const data::NormStats& norm,
                   const LocalTraining& cfg, std::uint64_t seed);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Argmax accuracy (ties go to the lowest class index) and mean cross-entropy.
EvalResult evaluate(const ParamSet& params, const data::Dataset& dataset, const data::NormStats& norm);

std::vector<int> predict(const ParamSet& params, const data::Dataset& dataset, const data::NormStats& norm);

/// Sum of per-image designated-layer channel sums over the whole dataset.
std::vector<double> channel_activation_totals(const ParamSet& params, const data::Dataset& dataset,
                                              const data::NormStats& norm);

int argmax(std::span<const float> logits);
std::vector<double> softmax(std::span<const float> logits);

}  // namespace fedprune::nn
