// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "autodiff/tensor.hpp"

namespace cdflow::eval {

enum class Distortion { translate, rotate, dilate };

const char* distortion_name(Distortion d);
Distortion parse_distortion(const std::string& name);

/// Concrete magnitude of one distortion draw.
struct DistortParams {
  Distortion kind = Distortion::translate;
  int dx = 0;  // translate: content moves right by dx pixels
  int dy = 0;  // translate: content moves down by dy pixels
  double angle_degrees = 0.0;
  double factor = 1.0;
};

inline constexpr double kMaxShiftFraction = 0.05;
inline constexpr double kMaxRotationDegrees = 3.0;
inline constexpr double kDilationFactor = 1.05;

/// Uniform draw within the protocol bounds: shifts up to floor(5%) of each
/// extent in both directions, rotations up to 3 degrees either way, dilation
/// by exactly 1.05.
DistortParams sample_distortion(Distortion kind, std::size_t height, std::size_t width, std::mt19937_64& rng);

/// Integer shift with edge replication.
ad::Tensor translate(const ad::Tensor& image, int dx, int dy);
/// Rotation about the image center, bilinear, edge-replicated sampling.
ad::Tensor rotate(const ad::Tensor& image, double angle_degrees);
/// Zoom about the center by `factor`, bilinear, cropped to the input size.
ad::Tensor dilate(const ad::Tensor& image, double factor);

ad::Tensor apply_distortion(const ad::Tensor& image, const DistortParams& params);

struct DistortedImage {
  ad::Tensor image;
  DistortParams params;
};

DistortedImage geometric_distort(const ad::Tensor& image, Distortion kind, std::uint64_t seed);

std::string describe(const DistortParams& params);

}  // namespace cdflow::eval
