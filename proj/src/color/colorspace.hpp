// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "autodiff/tensor.hpp"

namespace cdflow::color {

struct Lab {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// H x W grid of Lab triples.
struct LabImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Lab> pixels;

  const Lab& at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

enum class Formula { e76, e94, e2000 };

const char* formula_name(Formula f);
/// Parses "E76", "E94", "E2000" (case-insensitive); domain error otherwise.
Formula parse_formula(const char* name);

// sRGB (IEC 61966-2-1, D65, 2 degree observer). The reference white is the
// matrix image of RGB (1,1,1), so sRGB white maps to L=100, a=b=0.
double srgb_decode(double v);
double srgb_encode(double v);
Lab srgb_to_lab(double r, double g, double b);
/// Inverse conversion; the result is not clamped to the sRGB gamut.
std::array<double, 3> lab_to_srgb(const Lab& lab);

/// Per-pixel conversion of an H x W x 3 tensor with values in [0,1].
LabImage srgb_to_lab(const ad::Tensor& image);

double delta_e76(const Lab& c1, const Lab& c2);

struct Cie94Weights {
  double kL = 1.0;
  double kC = 1.0;
  double kH = 1.0;
  double K1 = 0.045;
  double K2 = 0.015;

  static Cie94Weights graphic_arts() { return {}; }
  static Cie94Weights textiles() { return {2.0, 1.0, 1.0, 0.048, 0.014}; }
};

/// CIE94 with `c1` as the reference color (its chroma sets S_C and S_H).
double delta_e94(const Lab& c1, const Lab& c2, const Cie94Weights& w = Cie94Weights::graphic_arts());

/// CIEDE2000 with kL = kC = kH = 1.
double delta_e2000(const Lab& c1, const Lab& c2);

double delta_e(Formula f, const Lab& c1, const Lab& c2);

/// Mean over co-located pixels of the per-pixel color difference.
double image_cd_mean(const ad::Tensor& a, const ad::Tensor& b, Formula f);

/// Throws ErrorCode::domain unless `image` is H x W x 3 with values in [0,1].
void require_rgb_image(const ad::Tensor& image, const char* what);

}  // namespace cdflow::color
