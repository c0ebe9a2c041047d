// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary checkpoint: "FPN1", u32 version, u8 model id, u32 tensor count, then
// per tensor {u16 name length, name, u8 ndim, u32 dims[], f32 payload}, then
// u32 mask layer, u32 mask length and the mask bits packed LSB first.
// Integers and floats are little-endian. Weights and biases are separate
// tensors named "<layer>.weight" and "<layer>.bias".

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedprune/model.hpp"

namespace fedprune::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);

/// Throws MagicError, TruncationError or DecodeError (version, model id,
/// tensor names and shapes, mask) with the offending byte offset.
ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace fedprune::nn
