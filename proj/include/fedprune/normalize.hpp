// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fedprune/dataset.hpp"

namespace fedprune::data {

/// Per-channel population mean and standard deviation of pixel/255.
/// Throws DegenerateError when a channel is constant.
NormStats compute_norm_stats(const Dataset& ds);

/// The whole dataset normalized, N x C x H x W.
std::vector<float> normalize(const Dataset& ds, const NormStats& stats);

struct TestSplit {
  Dataset test;
  Dataset validation;
};

/// The last `fraction` of the test set becomes the server's validation set.
TestSplit split_validation(const Dataset& official_test, double fraction = 0.1);

}  // namespace fedprune::data
