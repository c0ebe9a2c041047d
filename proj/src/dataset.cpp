// SPDX-License-Identifier: Apache-2.0
#include "fedprune/dataset.hpp"

#include <string>

#include "fedprune/error.hpp"

namespace fedprune::data {

namespace {
void check_label(int label) {
  if (label < 0 || label > 9) throw ArgumentError("label " + std::to_string(label) + " outside [0, 9]");
}
}  // namespace

void Dataset::set_label(std::size_t i, int label) {
  check_label(label);
  labels_[i] = static_cast<std::uint8_t>(label);
}

LabeledImage Dataset::at(std::size_t i) const {
  const auto px = pixels(i);
  return LabeledImage{channels_, height_, width_, {px.begin(), px.end()}, labels_[i]};
}

void Dataset::push_back(std::span<const std::uint8_t> px, int label) {
  if (px.size() != image_size())
    throw ArgumentError("image has " + std::to_string(px.size()) + " bytes, dataset expects " +
                        std::to_string(image_size()));
  check_label(label);
  pixels_.insert(pixels_.end(), px.begin(), px.end());
  labels_.push_back(static_cast<std::uint8_t>(label));
}

void Dataset::push_back(const LabeledImage& image) {
  if (image.channels != channels_ || image.height != height_ || image.width != width_)
    throw ArgumentError("image dimensions do not match dataset");
  push_back(image.pixels, image.label);
}

void Dataset::append(const Dataset& other) {
  if (other.channels_ != channels_ || other.height_ != height_ || other.width_ != width_)
    throw ArgumentError("cannot append datasets with different image dimensions");
  pixels_.insert(pixels_.end(), other.pixels_.begin(), other.pixels_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
}

void Dataset::reserve(std::size_t n) {
  pixels_.reserve(n * image_size());
  labels_.reserve(n);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(channels_, height_, width_);
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto px = pixels(i);
    out.pixels_.insert(out.pixels_.end(), px.begin(), px.end());
    out.labels_.push_back(labels_[i]);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw ArgumentError("slice out of range");
  Dataset out(channels_, height_, width_);
  out.pixels_.assign(pixels_.begin() + static_cast<std::ptrdiff_t>(begin * image_size()),
                     pixels_.begin() + static_cast<std::ptrdiff_t>(end * image_size()));
  out.labels_.assign(labels_.begin() + static_cast<std::ptrdiff_t>(begin),
                     labels_.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

}  // namespace fedprune::data
