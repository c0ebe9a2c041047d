// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fedprune/dataset.hpp"

namespace fedprune::data {

struct TriggerPixel {
  int row = 0, col = 0, channel = 0;
  std::uint8_t value = 255;
  bool operator==(const TriggerPixel&) const = default;
  auto operator<=>(const TriggerPixel&) const = default;
};

/// Trigger, victim label T, target label F, amplification alpha and the
/// fraction of the attacker's training set that is triggered.
struct BackdoorSpec {
  std::vector<TriggerPixel> trigger;
  int vic_label = 9;
  int atk_label = 1;
  double alpha = 1.0;
  double poison_fraction = 0.5;

  /// Throws ConfigError unless T != F, both in [0, 9], alpha >= 1 and the
  /// poison fraction is in [0, 1].
  void validate() const;
  /// Throws ArgumentError if a trigger pixel falls outside the image.
  void check_bounds(int channels, int height, int width) const;
};

BackdoorSpec make_backdoor_spec(std::vector<TriggerPixel> trigger, int vic, int atk, double alpha,
                                double poison_fraction = 0.5);

/// P-pixel pattern inside the top-right 4x4 block, P in [1, 9], value 255 on
/// every channel. Pixel order: centre (1, W-2), the diagonal through it, the
/// other diagonal, the vertical arm, the horizontal arm.
std::vector<TriggerPixel> corner_pattern(int pixels, int channels, int width);

/// Four 1x4 horizontal strips at rows 0 and 3, columns 0-3 and 6-9, on
/// every channel.
std::vector<TriggerPixel> strip_pattern(int channels);

/// Overwrites the trigger pixels in place; bounds are checked.
void stamp(std::span<std::uint8_t> pixels, int channels, int height, int width,
           const std::vector<TriggerPixel>& trigger);

LabeledImage apply_backdoor(const LabeledImage& image, const BackdoorSpec& spec);

/// Every test image with label T, triggered and relabelled F. Throws
/// ArgumentError when the test set holds no image of label T.
Dataset build_backdoor_testset(const Dataset& test, const BackdoorSpec& spec);

/// Splits the trigger's pixel positions, sorted row-major, into m contiguous
/// near-equal groups. All parts share T, F and alpha.
std::vector<BackdoorSpec> decompose_dba(const BackdoorSpec& global, int parts);

/// Triggered copies for the attacker's training set, labelled F. Copies are
/// made from the T images of `clean`, or from every image when there is none.
/// Their count is n * pf / (1 - pf); pf = 1 yields one copy per source image.
Dataset poisoned_copies(const Dataset& clean, const BackdoorSpec& spec);

}  // namespace fedprune::data
