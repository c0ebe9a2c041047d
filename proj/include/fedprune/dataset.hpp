// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedprune::data {

/// One image, channel-major (C x H x W), with its class label.
struct LabeledImage {
  int channels = 1, height = 28, width = 28;
  std::vector<std::uint8_t> pixels;
  int label = 0;

  std::uint8_t& at(int row, int col, int channel = 0) {
    return pixels[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  std::uint8_t at(int row, int col, int channel = 0) const {
    return pixels[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  bool operator==(const LabeledImage&) const = default;
};

/// Contiguous 8-bit images with labels in [0, 9].
class Dataset {
 public:
  Dataset() = default;
  Dataset(int channels, int height, int width) : channels_(channels), height_(height), width_(width) {}

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t image_size() const { return static_cast<std::size_t>(channels_) * height_ * width_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::span<const std::uint8_t> pixels(std::size_t i) const {
    return {pixels_.data() + i * image_size(), image_size()};
  }
  std::span<std::uint8_t> pixels(std::size_t i) { return {pixels_.data() + i * image_size(), image_size()}; }
  int label(std::size_t i) const { return labels_[i]; }
  void set_label(std::size_t i, int label);

  LabeledImage at(std::size_t i) const;
  void push_back(std::span<const std::uint8_t> pixels, int label);
  void push_back(const LabeledImage& image);
  void append(const Dataset& other);
  void reserve(std::size_t n);

  Dataset subset(std::span<const std::size_t> indices) const;
  /// Items [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

  const std::vector<std::uint8_t>& raw_pixels() const { return pixels_; }
  const std::vector<std::uint8_t>& raw_labels() const { return labels_; }

  bool operator==(const Dataset&) const = default;

 private:
  int channels_ = 1, height_ = 28, width_ = 28;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::uint8_t> labels_;
};

/// Per-channel mean and standard deviation of pixel/255.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const NormStats&) const = default;
};

/// Writes (x/255 - mean)/std for the selected images into `out` (N x C x H x W).
template <class T>
void normalize_into(const Dataset& ds, std::span<const std::size_t> indices, const NormStats& stats,
                    std::vector<T>& out) {
  const std::size_t plane = static_cast<std::size_t>(ds.height()) * ds.width();
  out.resize(indices.size() * ds.image_size());
  T* dst = out.data();
  for (std::size_t idx : indices) {
    const auto src = ds.pixels(idx);
    for (int c = 0; c < ds.channels(); ++c) {
      const double mean = stats.mean[static_cast<std::size_t>(c)];
      const double inv = 1.0 / stats.stddev[static_cast<std::size_t>(c)];
      const std::uint8_t* s = src.data() + static_cast<std::size_t>(c) * plane;
      for (std::size_t p = 0; p < plane; ++p) *dst++ = static_cast<T>((s[p] / 255.0 - mean) * inv);
    }
  }
}

}  // namespace fedprune::data
