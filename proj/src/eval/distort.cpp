// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "eval/distort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "color/colorspace.hpp"
#include "common/error.hpp"

namespace cdflow::eval {

namespace {

std::size_t clamp_index(long v, std::size_t extent) {
  return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(extent) - 1));
}

// Bilinear sample at real coordinates with edge replication. The lerp form
// keeps constant fields exactly constant.
void sample(const ad::Tensor& img, double sy, double sx, double* out) {
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
  const long y0 = static_cast<long>(std::floor(sy)), x0 = static_cast<long>(std::floor(sx));
  const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
  const std::size_t ya = clamp_index(y0, H), yb = clamp_index(y0 + 1, H);
  const std::size_t xa = clamp_index(x0, W), xb = clamp_index(x0 + 1, W);
  for (std::size_t c = 0; c < C; ++c) {
    const double tl = img.at(ya, xa, c), tr = img.at(ya, xb, c);
    const double bl = img.at(yb, xa, c), br = img.at(yb, xb, c);
    const double top = tl + fx * (tr - tl);
    const double bottom = bl + fx * (br - bl);
    out[c] = top + fy * (bottom - top);
  }
}

template <class Map>
ad::Tensor resample(const ad::Tensor& image, Map&& source_of) {
  color::require_rgb_image(image, "distortion input");
  const std::size_t H = image.dim(0), W = image.dim(1);
  const double cy = 0.5 * static_cast<double>(H - 1), cx = 0.5 * static_cast<double>(W - 1);
  ad::Tensor out(image.shape());
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const auto [sy, sx] = source_of(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
      sample(image, sy + cy, sx + cx, &out.at(y, x, 0));
    }
  }
  return out;
}

}  // namespace

const char* distortion_name(Distortion d) {
  switch (d) {
    case Distortion::translate: return "translate";
    case Distortion::rotate: return "rotate";
    case Distortion::dilate: return "dilate";
  }
  return "?";
}

Distortion parse_distortion(const std::string& name) {
  if (name == "translate") return Distortion::translate;
  if (name == "rotate") return Distortion::rotate;
  if (name == "dilate") return Distortion::dilate;
  fail(ErrorCode::domain, "unknown distortion '" + name + "' (expected translate, rotate or dilate)");
}

DistortParams sample_distortion(Distortion kind, std::size_t height, std::size_t width, std::mt19937_64& rng) {
  DistortParams p;
  p.kind = kind;
  switch (kind) {
    case Distortion::translate: {
      const int mx = static_cast<int>(std::floor(kMaxShiftFraction * static_cast<double>(width)));
      const int my = static_cast<int>(std::floor(kMaxShiftFraction * static_cast<double>(height)));
      p.dx = std::uniform_int_distribution<int>(-mx, mx)(rng);
      p.dy = std::uniform_int_distribution<int>(-my, my)(rng);
      break;
    }
    case Distortion::rotate:
      p.angle_degrees = std::uniform_real_distribution<double>(-kMaxRotationDegrees, kMaxRotationDegrees)(rng);
      break;
    case Distortion::dilate:
      p.factor = kDilationFactor;
      break;
  }
  return p;
}

ad::Tensor translate(const ad::Tensor& image, int dx, int dy) {
  color::require_rgb_image(image, "translation input");
  const std::size_t H = image.dim(0), W = image.dim(1);
  ad::Tensor out(image.shape());
  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t sy = clamp_index(static_cast<long>(y) - dy, H);
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t sx = clamp_index(static_cast<long>(x) - dx, W);
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

ad::Tensor rotate(const ad::Tensor& image, double angle_degrees) {
  const double t = angle_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  return resample(image, [&](double y, double x) { return std::pair{-s * x + c * y, c * x + s * y}; });
}

ad::Tensor dilate(const ad::Tensor& image, double factor) {
  if (!(factor > 0.0)) fail(ErrorCode::domain, "dilation factor must be positive");
  return resample(image, [&](double y, double x) { return std::pair{y / factor, x / factor}; });
}

ad::Tensor apply_distortion(const ad::Tensor& image, const DistortParams& p) {
  switch (p.kind) {
    case Distortion::translate: return translate(image, p.dx, p.dy);
    case Distortion::rotate: return rotate(image, p.angle_degrees);
    case Distortion::dilate: return dilate(image, p.factor);
  }
  return image;
}

DistortedImage geometric_distort(const ad::Tensor& image, Distortion kind, std::uint64_t seed) {
  color::require_rgb_image(image, "distortion input");
  std::mt19937_64 rng(seed);
  DistortedImage out;
  out.params = sample_distortion(kind, image.dim(0), image.dim(1), rng);
  out.image = apply_distortion(image, out.params);
  return out;
}

std::string describe(const DistortParams& p) {
  char buf[96];
  switch (p.kind) {
    case Distortion::translate: std::snprintf(buf, sizeof(buf), "translate dx=%d dy=%d", p.dx, p.dy); break;
    case Distortion::rotate: std::snprintf(buf, sizeof(buf), "rotate angle=%.6f", p.angle_degrees); break;
    case Distortion::dilate: std::snprintf(buf, sizeof(buf), "dilate factor=%.6f", p.factor); break;
  }
  return buf;
}

}  // namespace cdflow::eval
