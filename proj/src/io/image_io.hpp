// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"

namespace cdflow::io {

/// 8-bit RGB PNG or binary PPM (P6, maxval 255) as an (H, W, 3) tensor in
/// [0, 1]. The format is sniffed from the file header, not the extension.
/// Input error naming the path on anything else, including alpha channels.
ad::Tensor load_image(const std::string& path);

/// Writes round(255 * clamp(v, 0, 1)). ".png" selects PNG, anything else PPM.
void save_image(const ad::Tensor& image, const std::string& path);

/// 8-bit grayscale image (PGM P5).
void save_gray(const std::vector<std::uint8_t>& pixels, std::size_t height, std::size_t width,
               const std::string& path);

/// Largest centered crop whose extents are multiples of `multiple`.
/// Dimension error if either extent is smaller than `multiple`.
ad::Tensor center_crop(const ad::Tensor& image, std::size_t multiple);

}  // namespace cdflow::io
