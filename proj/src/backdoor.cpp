// SPDX-License-Identifier: Apache-2.0
#include "fedprune/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "fedprune/error.hpp"

namespace fedprune::data {

void BackdoorSpec::validate() const {
  if (vic_label < 0 || vic_label > 9 || atk_label < 0 || atk_label > 9)
    throw ConfigError("backdoor labels must be in [0, 9]");
  if (vic_label == atk_label)
    throw ConfigError("victim label and target label must differ (both " + std::to_string(vic_label) + ")");
  if (!(alpha >= 1.0)) throw ConfigError("amplification alpha must be at least 1");
  if (!(poison_fraction >= 0.0 && poison_fraction <= 1.0)) throw ConfigError("poison fraction must be in [0, 1]");
}

void BackdoorSpec::check_bounds(int channels, int height, int width) const {
  for (const auto& p : trigger)
    if (p.row < 0 || p.row >= height || p.col < 0 || p.col >= width || p.channel < 0 || p.channel >= channels)
      throw ArgumentError("trigger pixel (" + std::to_string(p.row) + ", " + std::to_string(p.col) + ", " +
                          std::to_string(p.channel) + ") is outside a " + std::to_string(channels) + "x" +
                          std::to_string(height) + "x" + std::to_string(width) + " image");
}

BackdoorSpec make_backdoor_spec(std::vector<TriggerPixel> trigger, int vic, int atk, double alpha,
                                double poison_fraction) {
  BackdoorSpec spec{std::move(trigger), vic, atk, alpha, poison_fraction};
  spec.validate();
  return spec;
}

std::vector<TriggerPixel> corner_pattern(int pixels, int channels, int width) {
  if (pixels < 1 || pixels > 9) throw ConfigError("pattern size must be in [1, 9], got " + std::to_string(pixels));
  if (width < 4) throw ConfigError("image too narrow for the corner pattern");
  static constexpr int kOrder[9][2] = {{1, 2}, {0, 3}, {2, 1}, {0, 1}, {2, 3}, {0, 2}, {2, 2}, {1, 3}, {1, 1}};
  std::vector<TriggerPixel> out;
  for (int i = 0; i < pixels; ++i)
    for (int c = 0; c < channels; ++c) out.push_back({kOrder[i][0], width - 4 + kOrder[i][1], c, 255});
  return out;
}

std::vector<TriggerPixel> strip_pattern(int channels) {
  std::vector<TriggerPixel> out;
  for (int row : {0, 3})
    for (int start : {0, 6})
      for (int col = start; col < start + 4; ++col)
        for (int c = 0; c < channels; ++c) out.push_back({row, col, c, 255});
  return out;
}

void stamp(std::span<std::uint8_t> pixels, int channels, int height, int width,
           const std::vector<TriggerPixel>& trigger) {
  BackdoorSpec probe;
  probe.trigger = trigger;
  probe.check_bounds(channels, height, width);
  for (const auto& p : trigger)
    pixels[(static_cast<std::size_t>(p.channel) * height + static_cast<std::size_t>(p.row)) * width +
           static_cast<std::size_t>(p.col)] = p.value;
}

LabeledImage apply_backdoor(const LabeledImage& image, const BackdoorSpec& spec) {
  LabeledImage out = image;
  stamp(out.pixels, out.channels, out.height, out.width, spec.trigger);
  return out;
}

Dataset build_backdoor_testset(const Dataset& test, const BackdoorSpec& spec) {
  spec.validate();
  spec.check_bounds(test.channels(), test.height(), test.width());
  Dataset out(test.channels(), test.height(), test.width());
  std::vector<std::uint8_t> buf(test.image_size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.label(i) != spec.vic_label) continue;
    const auto px = test.pixels(i);
    std::copy(px.begin(), px.end(), buf.begin());
    stamp(buf, test.channels(), test.height(), test.width(), spec.trigger);
    out.push_back(buf, spec.atk_label);
  }
  if (out.empty()) throw ArgumentError("test set has no image of victim label " + std::to_string(spec.vic_label));
  return out;
}

std::vector<BackdoorSpec> decompose_dba(const BackdoorSpec& global, int parts) {
  std::map<std::pair<int, int>, std::vector<TriggerPixel>> by_position;
  for (const auto& p : global.trigger) by_position[{p.row, p.col}].push_back(p);
  if (parts < 1 || static_cast<std::size_t>(parts) > by_position.size())
    throw ArgumentError("cannot split a " + std::to_string(by_position.size()) + "-pixel trigger into " +
                        std::to_string(parts) + " parts");
  const std::size_t total = by_position.size();
  const std::size_t m = static_cast<std::size_t>(parts);
  std::vector<BackdoorSpec> out(m, BackdoorSpec{{}, global.vic_label, global.atk_label, global.alpha,
                                                global.poison_fraction});
  std::size_t k = 0;
  for (const auto& [pos, pixels] : by_position) {
    const std::size_t part = k * m / total;
    out[part].trigger.insert(out[part].trigger.end(), pixels.begin(), pixels.end());
    ++k;
  }
  return out;
}

Dataset poisoned_copies(const Dataset& clean, const BackdoorSpec& spec) {
  Dataset out(clean.channels(), clean.height(), clean.width());
  if (spec.poison_fraction <= 0.0 || clean.empty()) return out;
  spec.check_bounds(clean.channels(), clean.height(), clean.width());
  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (clean.label(i) == spec.vic_label) sources.push_back(i);
  if (sources.empty())
    for (std::size_t i = 0; i < clean.size(); ++i) sources.push_back(i);
  const std::size_t count =
      spec.poison_fraction >= 1.0
          ? sources.size()
          : static_cast<std::size_t>(std::llround(static_cast<double>(clean.size()) * spec.poison_fraction /
                                                  (1.0 - spec.poison_fraction)));
  out.reserve(count);
  std::vector<std::uint8_t> buf(clean.image_size());
  for (std::size_t k = 0; k < count; ++k) {
    const auto px = clean.pixels(sources[k % sources.size()]);
    std::copy(px.begin(), px.end(), buf.begin());
    stamp(buf, clean.channels(), clean.height(), clean.width(), spec.trigger);
    out.push_back(buf, spec.atk_label);
  }
  return out;
}

}  // namespace fedprune::data
