// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "train/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace cdflow::train {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Sorted cut positions splitting [0, extent) into `parts` non-empty spans.
std::vector<std::size_t> cuts(std::size_t extent, std::size_t parts, std::mt19937_64& rng) {
  std::vector<std::size_t> c{0};
  for (std::size_t i = 1; i < parts; ++i) c.push_back(uniform_index(rng, 1, extent - 1));
  c.push_back(extent);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

Region random_region(std::size_t height, std::size_t width, std::mt19937_64& rng) {
  const std::size_t h = uniform_index(rng, std::max<std::size_t>(1, height / 4), height);
  const std::size_t w = uniform_index(rng, std::max<std::size_t>(1, width / 4), width);
  const std::size_t y0 = uniform_index(rng, 0, height - h);
  const std::size_t x0 = uniform_index(rng, 0, width - w);
  return {y0, x0, y0 + h, x0 + w};
}

bool inside(const std::vector<Region>& regions, std::size_t y, std::size_t x) {
  for (const Region& r : regions) {
    if (y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1) return true;
  }
  return false;
}

}  // namespace

ad::Tensor synthetic_base_image(std::size_t height, std::size_t width, std::mt19937_64& rng) {
  ad::Tensor img({height, width, 3});
  const auto rows = cuts(height, uniform_index(rng, 2, 4), rng);
  const auto cols = cuts(width, uniform_index(rng, 2, 4), rng);
  for (std::size_t r = 0; r + 1 < rows.size(); ++r) {
    for (std::size_t c = 0; c + 1 < cols.size(); ++c) {
      double base[3], gy[3], gx[3];
      for (int ch = 0; ch < 3; ++ch) {
        base[ch] = uniform(rng, 0.1, 0.9);
        gy[ch] = uniform(rng, -0.1, 0.1);
        gx[ch] = uniform(rng, -0.1, 0.1);
      }
      const double ph = static_cast<double>(rows[r + 1] - rows[r]);
      const double pw = static_cast<double>(cols[c + 1] - cols[c]);
      for (std::size_t y = rows[r]; y < rows[r + 1]; ++y) {
        for (std::size_t x = cols[c]; x < cols[c + 1]; ++x) {
          const double ty = (static_cast<double>(y - rows[r]) + 0.5) / ph - 0.5;
          const double tx = (static_cast<double>(x - cols[c]) + 0.5) / pw - 0.5;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            img.at(y, x, ch) = std::clamp(base[ch] + gy[ch] * ty + gx[ch] * tx, 0.0, 1.0);
          }
        }
      }
    }
  }
  return img;
}

ad::Tensor apply_lab_shift(const ad::Tensor& image, const color::Lab& shift, const std::vector<Region>& regions) {
  color::require_rgb_image(image, "synthetic base image");
  ad::Tensor out = image;
  if (shift.L == 0.0 && shift.a == 0.0 && shift.b == 0.0) return out;
  for (std::size_t y = 0; y < image.dim(0); ++y) {
    for (std::size_t x = 0; x < image.dim(1); ++x) {
      if (!inside(regions, y, x)) continue;
      color::Lab lab = color::srgb_to_lab(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2));
      lab.L += shift.L;
      lab.a += shift.a;
      lab.b += shift.b;
      const auto rgb = color::lab_to_srgb(lab);
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(y, x, ch) = std::clamp(rgb[ch], 0.0, 1.0);
    }
  }
  return out;
}

LabeledPair make_synthetic_pair(const ad::Tensor& base, const color::Lab& shift, const std::vector<Region>& regions) {
  LabeledPair pair;
  pair.image_a = base;
  pair.image_b = apply_lab_shift(base, shift, regions);
  pair.delta_v = color::image_cd_mean(pair.image_a, pair.image_b, color::Formula::e2000);
  return pair;
}

std::vector<LabeledPair> gen_synthetic_dataset(std::size_t n, std::size_t height, std::size_t width,
                                               std::uint64_t seed, const SyntheticOptions& options) {
  if (height < 2 || width < 2) fail(ErrorCode::dimension, "synthetic images must be at least 2x2");
  if (options.min_regions < 1 || options.max_regions < options.min_regions) {
    fail(ErrorCode::contract, "invalid synthetic region count range");
  }
  std::mt19937_64 rng(seed);
  std::vector<LabeledPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ad::Tensor base = synthetic_base_image(height, width, rng);
    const color::Lab shift{uniform(rng, -options.max_shift, options.max_shift),
                           uniform(rng, -options.max_shift, options.max_shift),
                           uniform(rng, -options.max_shift, options.max_shift)};
    const auto count = uniform_index(rng, static_cast<std::size_t>(options.min_regions),
                                     static_cast<std::size_t>(options.max_regions));
    std::vector<Region> regions;
    for (std::size_t r = 0; r < count; ++r) regions.push_back(random_region(height, width, rng));
    out.push_back(make_synthetic_pair(base, shift, regions));
  }
  return out;
}

ad::Tensor quantize8(const ad::Tensor& image) {
  ad::Tensor out = image;
  for (double& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

}  // namespace cdflow::train
