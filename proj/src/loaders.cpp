// SPDX-License-Identifier: Apache-2.0
#include "fedprune/loaders.hpp"

#include <string>

#include "fedprune/error.hpp"
#include "fedprune/io.hpp"

namespace fedprune::data {
namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t header_field(std::span<const std::uint8_t> b, std::size_t at, const char* file) {
  if (b.size() < at + 4) throw TruncationError(std::string(file) + " header truncated", at + 4, b.size());
  return be32(b, at);
}

}  // namespace

Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  const std::uint32_t im_magic = header_field(images, 0, "image file");
  if (im_magic != kIdxImageMagic) throw MagicError("image file magic is not 0x00000803", 0);
  const std::uint32_t lb_magic = header_field(labels, 0, "label file");
  if (lb_magic != kIdxLabelMagic) throw MagicError("label file magic is not 0x00000801", 0);

  const std::uint32_t n = header_field(images, 4, "image file");
  const std::uint32_t rows = header_field(images, 8, "image file");
  const std::uint32_t cols = header_field(images, 12, "image file");
  const std::uint32_t nl = header_field(labels, 4, "label file");
  if (n != nl)
    throw CountMismatchError("image file has " + std::to_string(n) + " items, label file has " + std::to_string(nl),
                             4);
  if (rows == 0 || cols == 0) throw DecodeError("image dimensions must be positive", 8);

  const std::uint64_t image_bytes = 16 + static_cast<std::uint64_t>(n) * rows * cols;
  if (images.size() < image_bytes) throw TruncationError("image payload truncated", image_bytes, images.size());
  const std::uint64_t label_bytes = 8 + static_cast<std::uint64_t>(n);
  if (labels.size() < label_bytes) throw TruncationError("label payload truncated", label_bytes, labels.size());

  Dataset ds(1, static_cast<int>(rows), static_cast<int>(cols));
  ds.reserve(n);
  const std::size_t size = static_cast<std::size_t>(rows) * cols;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t label = labels[8 + i];
    if (label > 9) throw DecodeError("label " + std::to_string(label) + " out of range", 8 + i);
    ds.push_back(images.subspan(16 + i * size, size), label);
  }
  return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto im = io::read_file(images);
  const auto lb = io::read_file(labels);
  return decode_idx(im, lb);
}

Dataset decode_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecord != 0)
    throw DecodeError("CIFAR-10 batch length " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                      bytes.size() - bytes.size() % kCifarRecord);
  Dataset ds(3, 32, 32);
  const std::size_t n = bytes.size() / kCifarRecord;
  ds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = i * kCifarRecord;
    if (bytes[at] > 9) throw DecodeError("label " + std::to_string(bytes[at]) + " out of range", at);
    ds.push_back(bytes.subspan(at + 1, kCifarRecord - 1), bytes[at]);
  }
  return ds;
}

Dataset load_cifar10(std::span<const std::filesystem::path> batches) {
  Dataset all(3, 32, 32);
  for (const auto& path : batches) {
    const auto bytes = io::read_file(path);
    all.append(decode_cifar10(bytes));
  }
  return all;
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  put_be32(out, static_cast<std::uint32_t>(ds.height()));
  put_be32(out, static_cast<std::uint32_t>(ds.width()));
  out.insert(out.end(), ds.raw_pixels().begin(), ds.raw_pixels().end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  out.insert(out.end(), ds.raw_labels().begin(), ds.raw_labels().end());
  return out;
}

}  // namespace fedprune::data
