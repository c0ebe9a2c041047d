// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedprune/dataset.hpp"

namespace fedprune::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

/// Parses an IDX image file and its label file (big-endian headers).
/// Throws MagicError, TruncationError or CountMismatchError.
Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batches: records of one label byte and 3072 pixel bytes
/// (R, G and B planes of 32x32). Files are concatenated in the given order.
Dataset decode_cifar10(std::span<const std::uint8_t> bytes);
Dataset load_cifar10(std::span<const std::filesystem::path> batches);

/// Encoders for the same formats, used to produce fixtures.
std::vector<std::uint8_t> encode_idx_images(const Dataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds);

}  // namespace fedprune::data
