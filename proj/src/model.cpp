// SPDX-License-Identifier: Apache-2.0
#include "fedprune/model.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <numeric>

#include "fedprune/error.hpp"
#include "fedprune/kernels.hpp"
#include "fedprune/rng.hpp"

namespace fedprune::nn {

std::size_t TensorShape::count() const {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::string TensorShape::str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

std::string_view model_name(ModelId id) {
  switch (id) {
    case ModelId::mnist_small: return "mnist-small";
    case ModelId::mnist_std: return "mnist-std";
    case ModelId::fmnist: return "fmnist";
    case ModelId::cifar10: return "cifar10";
  }
  return "unknown";
}

ModelId parse_model_id(std::string_view name) {
  for (ModelId id : {ModelId::mnist_small, ModelId::mnist_std, ModelId::fmnist, ModelId::cifar10})
    if (model_name(id) == name) return id;
  throw ConfigError("unknown model '" + std::string(name) + "'");
}

TensorShape LayerDesc::weight_shape() const {
  if (is_conv()) return {{out_channels, in_channels, kernel, kernel}};
  return {{out_channels, in_channels}};
}

std::size_t LayerDesc::output_size() const {
  if (is_conv()) return static_cast<std::size_t>(out_channels) * pooled_h * pooled_w;
  return static_cast<std::size_t>(out_channels);
}

int LayerDesc::fan_in() const { return in_channels * kernel * kernel; }
int LayerDesc::fan_out() const { return out_channels * kernel * kernel; }

namespace {

LayerDesc conv(std::string name, int in, int out, int k, int pad, bool pool) {
  LayerDesc d{LayerDesc::Kind::conv, std::move(name), in, out, k, pad, pool, true};
  return d;
}

LayerDesc dense(std::string name, int in, int out, bool relu) {
  LayerDesc d{LayerDesc::Kind::dense, std::move(name), in, out, 1, 0, false, relu};
  return d;
}

ModelSpec build(ModelId id, int c, int h, int w, std::vector<LayerDesc> convs,
                std::vector<int> hidden) {
  ModelSpec spec{id, c, h, w, 10, {}, static_cast<int>(convs.size()) - 1};
  int ch = c, ph = h, pw = w;
  for (auto& l : convs) {
    l.in_h = ph;
    l.in_w = pw;
    l.out_h = ph + 2 * l.pad - l.kernel + 1;
    l.out_w = pw + 2 * l.pad - l.kernel + 1;
    l.pooled_h = l.pool ? l.out_h / 2 : l.out_h;
    l.pooled_w = l.pool ? l.out_w / 2 : l.out_w;
    if (l.in_channels != ch) throw ConfigError("conv chain mismatch in " + l.name);
    ch = l.out_channels;
    ph = l.pooled_h;
    pw = l.pooled_w;
    spec.layers.push_back(l);
  }
  int features = ch * ph * pw;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    spec.layers.push_back(dense("fc" + std::to_string(i + 1), features, hidden[i], true));
    features = hidden[i];
  }
  spec.layers.push_back(dense("fc" + std::to_string(hidden.size() + 1), features, 10, false));
  return spec;
}

ModelSpec make_spec(ModelId id) {
  switch (id) {
    case ModelId::mnist_small:
      return build(id, 1, 28, 28, {conv("conv1", 1, 8, 5, 0, true), conv("conv2", 8, 16, 5, 0, true)},
                   {128});
    case ModelId::mnist_std:
      return build(id, 1, 28, 28,
                   {conv("conv1", 1, 20, 5, 0, true), conv("conv2", 20, 50, 5, 0, true)}, {500});
    case ModelId::fmnist:
      return build(id, 1, 28, 28,
                   {conv("conv1", 1, 32, 3, 1, true), conv("conv2", 32, 64, 3, 1, true),
                    conv("conv3", 64, 128, 3, 1, true)},
                   {256});
    case ModelId::cifar10:
      return build(id, 3, 32, 32,
                   {conv("conv1", 3, 64, 3, 1, false), conv("conv2", 64, 64, 3, 1, true),
                    conv("conv3", 64, 128, 3, 1, false), conv("conv4", 128, 128, 3, 1, true)},
                   {512, 128});
  }
  throw ConfigError("unknown model id");
}

}  // namespace

const ModelSpec& ModelSpec::get(ModelId id) {
  static const ModelSpec specs[] = {make_spec(ModelId::mnist_small), make_spec(ModelId::mnist_std),
                                    make_spec(ModelId::fmnist), make_spec(ModelId::cifar10)};
  const auto idx = static_cast<std::size_t>(id);
  if (idx >= std::size(specs)) throw ConfigError("unknown model id " + std::to_string(idx));
  return specs[idx];
}

ChannelMask ChannelMask::all_keep(const ModelSpec& spec) {
  return ChannelMask{spec.prune_layer,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(spec.designated().out_channels), 1)};
}

std::size_t ChannelMask::pruned_count() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{0}));
}

template <class T>
BasicParamSet<T>::BasicParamSet(const ModelSpec& spec) : spec_(&spec), mask_(ChannelMask::all_keep(spec)) {
  layers_.reserve(spec.layers.size());
  for (const auto& d : spec.layers) {
    LayerParams<T> p;
    p.name = d.name;
    p.weight_shape = d.weight_shape();
    p.weight.assign(p.weight_shape.count(), T(0));
    p.bias.assign(static_cast<std::size_t>(d.out_channels), T(0));
    layers_.push_back(std::move(p));
  }
}

template <class T>
std::vector<std::span<T>> BasicParamSet<T>::tensors() {
  std::vector<std::span<T>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

template <class T>
std::vector<std::span<const T>> BasicParamSet<T>::tensors() const {
  std::vector<std::span<const T>> out;
  for (const auto& l : layers_) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

template <class T>
std::size_t BasicParamSet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

template <class T>
bool BasicParamSet<T>::all_finite() const {
  for (const auto& t : tensors())
    for (T v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
bool BasicParamSet<T>::same_layout(const BasicParamSet& other) const {
  if (spec_ != other.spec_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weight.size() != other.layers_[i].weight.size() ||
        layers_[i].bias.size() != other.layers_[i].bias.size())
      return false;
  }
  return true;
}

template <class T>
bool BasicParamSet<T>::operator==(const BasicParamSet& other) const {
  if (!same_layout(other) || mask_ != other.mask_) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].weight != other.layers_[i].weight || layers_[i].bias != other.layers_[i].bias)
      return false;
  return true;
}

template class BasicParamSet<float>;
template class BasicParamSet<double>;

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamSet p(spec);
  Rng rng(derive_seed(seed, {0x1417}));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& d = spec.layers[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(d.fan_in() + d.fan_out()));
    for (float& w : p.layer(l).weight) w = static_cast<float>(rng.uniform(-limit, limit));
  }
  return p;
}

template <class T>
void zero_masked(BasicParamSet<T>& params, const ChannelMask& mask) {
  const ModelSpec& spec = params.spec();
  const auto li = static_cast<std::size_t>(mask.layer);
  const LayerDesc& d = spec.layers[li];
  const std::size_t filter = static_cast<std::size_t>(d.in_channels) * d.kernel * d.kernel;
  auto& own = params.layer(li);
  for (std::size_t c = 0; c < mask.size(); ++c) {
    if (mask.kept(c)) continue;
    std::fill_n(own.weight.begin() + static_cast<std::ptrdiff_t>(c * filter), filter, T(0));
    own.bias[c] = T(0);
  }
  if (li + 1 >= spec.layers.size()) return;

  const LayerDesc& next = spec.layers[li + 1];
  auto& consumer = params.layer(li + 1);
  if (next.is_conv()) {
    const std::size_t plane = static_cast<std::size_t>(next.kernel) * next.kernel;
    for (int o = 0; o < next.out_channels; ++o)
      for (std::size_t c = 0; c < mask.size(); ++c)
        if (!mask.kept(c))
          std::fill_n(consumer.weight.begin() +
                          static_cast<std::ptrdiff_t>((static_cast<std::size_t>(o) * next.in_channels + c) * plane),
                      plane, T(0));
  } else {
    const std::size_t block = static_cast<std::size_t>(d.pooled_h) * d.pooled_w;
    for (int o = 0; o < next.out_channels; ++o)
      for (std::size_t c = 0; c < mask.size(); ++c)
        if (!mask.kept(c))
          std::fill_n(consumer.weight.begin() +
                          static_cast<std::ptrdiff_t>(static_cast<std::size_t>(o) * next.in_channels + c * block),
                      block, T(0));
  }
}

template void zero_masked(BasicParamSet<float>&, const ChannelMask&);
template void zero_masked(BasicParamSet<double>&, const ChannelMask&);

ParamSet apply_channel_mask(ParamSet params, const ChannelMask& mask) {
  const ModelSpec& spec = params.spec();
  if (mask.layer < 0 || static_cast<std::size_t>(mask.layer) >= spec.layers.size() ||
      !spec.layers[static_cast<std::size_t>(mask.layer)].is_conv())
    throw ConfigError("mask layer index " + std::to_string(mask.layer) + " is not a conv layer");
  if (mask.layer != spec.prune_layer)
    throw ConfigError("mask layer " + std::to_string(mask.layer) + " is not the designated layer " +
                      std::to_string(spec.prune_layer));
  if (mask.size() != static_cast<std::size_t>(spec.designated().out_channels))
    throw ConfigError("mask length " + std::to_string(mask.size()) + " does not match " +
                      std::to_string(spec.designated().out_channels) + " channels");
  zero_masked(params, mask);
  params.mask() = mask;
  return params;
}

namespace {
void require_same_layout(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) throw ProtocolError("parameter sets have different layouts");
}
}  // namespace

ParamSet difference(const ParamSet& a, const ParamSet& b) {
  require_same_layout(a, b);
  ParamSet out = a;
  auto dst = out.tensors();
  auto rhs = b.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t)
    for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] -= rhs[t][i];
  return out;
}

void add_scaled(ParamSet& y, float alpha, const ParamSet& x) {
  require_same_layout(y, x);
  auto dst = y.tensors();
  auto src = x.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) kernels::axpy(dst[t].size(), alpha, src[t].data(), dst[t].data());
}

void scale(ParamSet& y, float alpha) {
  for (auto t : y.tensors())
    for (float& v : t) v *= alpha;
}

double max_abs_difference(const ParamSet& a, const ParamSet& b) {
  require_same_layout(a, b);
  double worst = 0.0;
  auto lhs = a.tensors();
  auto rhs = b.tensors();
  for (std::size_t t = 0; t < lhs.size(); ++t)
    for (std::size_t i = 0; i < lhs[t].size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(lhs[t][i]) - static_cast<double>(rhs[t][i])));
  return worst;
}

bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b) || a.mask() != b.mask()) return false;
  auto lhs = a.tensors();
  auto rhs = b.tensors();
  for (std::size_t t = 0; t < lhs.size(); ++t)
    if (std::memcmp(lhs[t].data(), rhs[t].data(), lhs[t].size_bytes()) != 0) return false;
  return true;
}

}  // namespace fedprune::nn
