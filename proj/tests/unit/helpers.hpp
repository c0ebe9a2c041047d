// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedprune/dataset.hpp"
#include "fedprune/model.hpp"
#include "fedprune/rng.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return FEDPRUNE_TEST_DATA_DIR; }

inline bool have_mnist() {
  return std::filesystem::exists(data_dir() / "mnist" / "train-images-idx3-ubyte");
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fedprune_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// n random images with labels cycling 0..9.
inline fedprune::data::Dataset random_dataset(std::size_t n, std::uint64_t seed, int c = 1, int h = 28, int w = 28) {
  fedprune::data::Dataset ds(c, h, w);
  fedprune::Rng rng(seed);
  std::vector<std::uint8_t> px(ds.image_size());
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.below(256));
    ds.push_back(px, static_cast<int>(i % 10));
  }
  return ds;
}

inline std::vector<float> random_input(std::size_t n, std::uint64_t seed) {
  fedprune::Rng rng(seed);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 2.0));
  return x;
}

/// Parameters with every value drawn uniformly from [-scale, scale].
inline fedprune::nn::ParamSet random_params(const fedprune::nn::ModelSpec& spec, std::uint64_t seed,
                                            double scale = 0.2) {
  fedprune::nn::ParamSet p(spec);
  fedprune::Rng rng(seed);
  for (auto t : p.tensors())
    for (float& v : t) v = static_cast<float>(rng.uniform(-scale, scale));
  return p;
}

inline fedprune::data::NormStats unit_norm(int channels = 1) {
  return {std::vector<double>(static_cast<std::size_t>(channels), 0.5),
          std::vector<double>(static_cast<std::size_t>(channels), 0.25)};
}

}  // namespace testutil
