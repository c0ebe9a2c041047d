// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedprune::nn {

struct TensorShape {
  std::vector<int> dims;

  std::size_t count() const;
  bool operator==(const TensorShape&) const = default;
  std::string str() const;
};

enum class ModelId : std::uint8_t { mnist_small = 0, mnist_std = 1, fmnist = 2, cifar10 = 3 };

std::string_view model_name(ModelId id);
ModelId parse_model_id(std::string_view name);

/// conv -> ReLU -> optional 2x2 max-pool (stride 2, floor), or dense -> optional ReLU.
struct LayerDesc {
  enum class Kind { conv, dense };
  Kind kind;
  std::string name;
  int in_channels = 0;  // conv: input channels; dense: input features
  int out_channels = 0; // conv: filters; dense: output features
  int kernel = 1;
  int pad = 0;
  bool pool = false;
  bool relu = true;

  // Geometry filled in by ModelSpec.
  int in_h = 1, in_w = 1;      // conv input plane
  int out_h = 1, out_w = 1;    // conv output plane before pooling
  int pooled_h = 1, pooled_w = 1;

  bool is_conv() const { return kind == Kind::conv; }
  TensorShape weight_shape() const;
  std::size_t weight_count() const { return weight_shape().count(); }
  /// Elements of one image's output after pooling (conv) or out_channels (dense).
  std::size_t output_size() const;
  int fan_in() const;
  int fan_out() const;
};

struct ModelSpec {
  ModelId id;
  int in_channels, in_h, in_w;
  int classes = 10;
  std::vector<LayerDesc> layers;
  int prune_layer;  // index of the last convolutional layer

  std::size_t input_size() const {
    return static_cast<std::size_t>(in_channels) * in_h * in_w;
  }
  const LayerDesc& designated() const { return layers[static_cast<std::size_t>(prune_layer)]; }

  static const ModelSpec& get(ModelId id);
  static const ModelSpec& get(std::string_view name) { return get(parse_model_id(name)); }
};

/// Keep-flags for the output channels of one conv layer. All-true is the identity.
struct ChannelMask {
  int layer = 0;
  std::vector<std::uint8_t> keep;

  static ChannelMask all_keep(const ModelSpec& spec);

  std::size_t size() const { return keep.size(); }
  bool kept(std::size_t c) const { return keep[c] != 0; }
  std::size_t pruned_count() const;
  bool is_identity() const { return pruned_count() == 0; }
  bool operator==(const ChannelMask&) const = default;
};

template <class T>
struct LayerParams {
  std::string name;
  TensorShape weight_shape;
  std::vector<T> weight;
  std::vector<T> bias;
};

/// Ordered parameter tensors for one ModelSpec plus the channel mask of the
/// designated layer. Owned by one task at a time.
template <class T>
class BasicParamSet {
 public:
  BasicParamSet() = default;
  explicit BasicParamSet(const ModelSpec& spec);

  const ModelSpec& spec() const { return *spec_; }
  bool valid() const { return spec_ != nullptr; }

  std::vector<LayerParams<T>>& layers() { return layers_; }
  const std::vector<LayerParams<T>>& layers() const { return layers_; }
  LayerParams<T>& layer(std::size_t i) { return layers_[i]; }
  const LayerParams<T>& layer(std::size_t i) const { return layers_[i]; }

  ChannelMask& mask() { return mask_; }
  const ChannelMask& mask() const { return mask_; }

  /// Weight and bias tensors of every layer, in layer order.
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool same_layout(const BasicParamSet& other) const;

  template <class U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out(*spec_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& dst = out.layer(l);
      dst.weight.assign(layers_[l].weight.begin(), layers_[l].weight.end());
      dst.bias.assign(layers_[l].bias.begin(), layers_[l].bias.end());
    }
    out.mask() = mask_;
    return out;
  }

  bool operator==(const BasicParamSet& other) const;

 private:
  const ModelSpec* spec_ = nullptr;
  std::vector<LayerParams<T>> layers_;
  ChannelMask mask_;
};

using ParamSet = BasicParamSet<float>;

extern template class BasicParamSet<float>;
extern template class BasicParamSet<double>;

/// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

/// Zeroes the masked channels' filters and biases and the next layer's weights
/// that read them. Stores the mask on the result. Idempotent.
ParamSet apply_channel_mask(ParamSet params, const ChannelMask& mask);

/// Zeroes every parameter that belongs to, or reads from, a masked channel.
template <class T>
void zero_masked(BasicParamSet<T>& params, const ChannelMask& mask);

// Element-wise helpers over all tensors. Shapes must agree (ProtocolError).
ParamSet difference(const ParamSet& a, const ParamSet& b);       // a - b
void add_scaled(ParamSet& y, float alpha, const ParamSet& x);    // y += alpha * x
void scale(ParamSet& y, float alpha);
double max_abs_difference(const ParamSet& a, const ParamSet& b);
bool bitwise_equal(const ParamSet& a, const ParamSet& b);

}  // namespace fedprune::nn
