// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "autodiff/tensor.hpp"
#include "color/colorspace.hpp"
#include "train/losses.hpp"

namespace cdflow::train {

struct SyntheticOptions {
  /// Each Lab shift component is drawn from U(-max_shift, max_shift).
  double max_shift = 12.0;
  int min_regions = 1;
  int max_regions = 3;
};

/// A rectangle [y0, y1) x [x0, x1).
struct Region {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};

/// Piecewise-smooth image: a random grid of patches, each with its own base
/// color and a mild linear shading ramp.
ad::Tensor synthetic_base_image(std::size_t height, std::size_t width, std::mt19937_64& rng);

/// Adds `shift` to the Lab coordinates of every pixel inside any region and
/// converts back to sRGB, clipped to [0,1].
ad::Tensor apply_lab_shift(const ad::Tensor& image, const color::Lab& shift, const std::vector<Region>& regions);

/// Pair (base, shifted copy) labelled with the pixel-mean CIEDE2000.
LabeledPair make_synthetic_pair(const ad::Tensor& base, const color::Lab& shift, const std::vector<Region>& regions);

/// n seeded pairs of size height x width. Deterministic under `seed`.
std::vector<LabeledPair> gen_synthetic_dataset(std::size_t n, std::size_t height, std::size_t width,
                                               std::uint64_t seed, const SyntheticOptions& options = {});

/// Rounds every pixel to the nearest 8-bit level, as saving to PNG/PPM would.
ad::Tensor quantize8(const ad::Tensor& image);

}  // namespace cdflow::train
