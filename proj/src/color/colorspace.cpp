// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "color/colorspace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "common/error.hpp"

namespace cdflow::color {

namespace {

// Linear sRGB -> XYZ, IEC 61966-2-1.
constexpr double kRgbToXyz[3][3] = {
    {0.4124, 0.3576, 0.1805},
    {0.2126, 0.7152, 0.0722},
    {0.0193, 0.1192, 0.9505},
};

constexpr double kWhite[3] = {
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

double lab_f_inv(double f) {
  const double f3 = f * f * f;
  return f3 > kEpsilon ? f3 : (116.0 * f - 16.0) / kKappa;
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

// Inverse of kRgbToXyz, computed once.
struct XyzToRgb {
  double m[3][3];
  XyzToRgb() {
    const auto& a = kRgbToXyz;
    const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                       a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                       a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  }
};

const XyzToRgb& xyz_to_rgb() {
  static const XyzToRgb inv;
  return inv;
}

}  // namespace

const char* formula_name(Formula f) {
  switch (f) {
    case Formula::e76: return "E76";
    case Formula::e94: return "E94";
    case Formula::e2000: return "E2000";
  }
  return "?";
}

Formula parse_formula(const char* name) {
  std::string s(name ? name : "");
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "E76" || s == "CIELAB" || s == "DE76") return Formula::e76;
  if (s == "E94" || s == "CIE94" || s == "DE94") return Formula::e94;
  if (s == "E2000" || s == "CIEDE2000" || s == "DE2000" || s == "E00") return Formula::e2000;
  fail(ErrorCode::domain, "unknown color-difference formula '" + std::string(name ? name : "") +
                              "' (expected E76, E94 or E2000)");
}

double srgb_decode(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

Lab srgb_to_lab(double r, double g, double b) {
  for (double v : {r, g, b}) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::domain, "sRGB component outside [0,1]: " + std::to_string(v));
  }
  const double lin[3] = {srgb_decode(r), srgb_decode(g), srgb_decode(b)};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const double xyz = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    f[i] = lab_f(xyz / kWhite[i]);
  }
  return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

std::array<double, 3> lab_to_srgb(const Lab& lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double xyz[3] = {lab_f_inv(fx) * kWhite[0], lab_f_inv(fy) * kWhite[1], lab_f_inv(fz) * kWhite[2]};
  const auto& m = xyz_to_rgb().m;
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    const double lin = m[i][0] * xyz[0] + m[i][1] * xyz[1] + m[i][2] * xyz[2];
    rgb[i] = lin < 0.0 ? -srgb_encode(-lin) : srgb_encode(lin);
  }
  return rgb;
}

void require_rgb_image(const ad::Tensor& image, const char* what) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    fail(ErrorCode::dimension, std::string(what) + " must be H x W x 3, got " + ad::shape_str(image.shape()));
  }
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorCode::domain, std::string(what) + " has a value outside [0,1]: " + std::to_string(v));
    }
  }
}

LabImage srgb_to_lab(const ad::Tensor& image) {
  require_rgb_image(image, "image");
  LabImage out;
  out.height = image.dim(0);
  out.width = image.dim(1);
  out.pixels.reserve(out.height * out.width);
  for (std::size_t p = 0; p < out.height * out.width; ++p) {
    out.pixels.push_back(srgb_to_lab(image[3 * p], image[3 * p + 1], image[3 * p + 2]));
  }
  return out;
}

double delta_e76(const Lab& c1, const Lab& c2) {
  const double dL = c1.L - c2.L, da = c1.a - c2.a, db = c1.b - c2.b;
  return std::sqrt(dL * dL + da * da + db * db);
}

double delta_e94(const Lab& c1, const Lab& c2, const Cie94Weights& w) {
  if (!(w.kL > 0.0 && w.kC > 0.0 && w.kH > 0.0)) {
    fail(ErrorCode::domain, "CIE94 parametric factors must be positive");
  }
  const double dL = c1.L - c2.L;
  const double C1 = std::hypot(c1.a, c1.b);
  const double C2 = std::hypot(c2.a, c2.b);
  const double dC = C1 - C2;
  const double da = c1.a - c2.a, db = c1.b - c2.b;
  const double dH2 = std::max(0.0, da * da + db * db - dC * dC);
  const double SL = 1.0;
  const double SC = 1.0 + w.K1 * C1;
  const double SH = 1.0 + w.K2 * C1;
  const double tL = dL / (w.kL * SL);
  const double tC = dC / (w.kC * SC);
  const double tH2 = dH2 / ((w.kH * SH) * (w.kH * SH));
  return std::sqrt(tL * tL + tC * tC + tH2);
}

double delta_e2000(const Lab& c1, const Lab& c2) {
  constexpr double k25pow7 = 6103515625.0;

  const double C1 = std::hypot(c1.a, c1.b);
  const double C2 = std::hypot(c2.a, c2.b);
  const double Cbar = 0.5 * (C1 + C2);
  const double Cbar7 = std::pow(Cbar, 7.0);
  const double G = 0.5 * (1.0 - std::sqrt(Cbar7 / (Cbar7 + k25pow7)));
  const double a1p = (1.0 + G) * c1.a;
  const double a2p = (1.0 + G) * c2.a;
  const double C1p = std::hypot(a1p, c1.b);
  const double C2p = std::hypot(a2p, c2.b);

  auto hue = [](double b, double ap) {
    if (b == 0.0 && ap == 0.0) return 0.0;
    double h = deg(std::atan2(b, ap));
    if (h < 0.0) h += 360.0;
    return h;
  };
  const double h1p = hue(c1.b, a1p);
  const double h2p = hue(c2.b, a2p);

  const double dLp = c2.L - c1.L;
  const double dCp = C2p - C1p;

  double dhp = 0.0;
  if (C1p * C2p != 0.0) {
    dhp = h2p - h1p;
    if (dhp > 180.0) {
      dhp -= 360.0;
    } else if (dhp < -180.0) {
      dhp += 360.0;
    }
  }
  const double dHp = 2.0 * std::sqrt(C1p * C2p) * std::sin(rad(dhp / 2.0));

  const double Lbarp = 0.5 * (c1.L + c2.L);
  const double Cbarp = 0.5 * (C1p + C2p);

  double hbarp = h1p + h2p;
  if (C1p * C2p != 0.0) {
    if (std::abs(h1p - h2p) <= 180.0) {
      hbarp = 0.5 * (h1p + h2p);
    } else if (h1p + h2p < 360.0) {
      hbarp = 0.5 * (h1p + h2p + 360.0);
    } else {
      hbarp = 0.5 * (h1p + h2p - 360.0);
    }
  }

  const double T = 1.0 - 0.17 * std::cos(rad(hbarp - 30.0)) + 0.24 * std::cos(rad(2.0 * hbarp)) +
                   0.32 * std::cos(rad(3.0 * hbarp + 6.0)) - 0.20 * std::cos(rad(4.0 * hbarp - 63.0));
  const double dtheta = 30.0 * std::exp(-std::pow((hbarp - 275.0) / 25.0, 2.0));
  const double Cbarp7 = std::pow(Cbarp, 7.0);
  const double RC = 2.0 * std::sqrt(Cbarp7 / (Cbarp7 + k25pow7));
  const double Lm50sq = (Lbarp - 50.0) * (Lbarp - 50.0);
  const double SL = 1.0 + 0.015 * Lm50sq / std::sqrt(20.0 + Lm50sq);
  const double SC = 1.0 + 0.045 * Cbarp;
  const double SH = 1.0 + 0.015 * Cbarp * T;
  const double RT = -std::sin(rad(2.0 * dtheta)) * RC;

  const double tL = dLp / SL;
  const double tC = dCp / SC;
  const double tH = dHp / SH;
  return std::sqrt(tL * tL + tC * tC + tH * tH + RT * tC * tH);
}

double delta_e(Formula f, const Lab& c1, const Lab& c2) {
  switch (f) {
    case Formula::e76: return delta_e76(c1, c2);
    case Formula::e94: return delta_e94(c1, c2);
    case Formula::e2000: return delta_e2000(c1, c2);
  }
  return 0.0;
}

double image_cd_mean(const ad::Tensor& a, const ad::Tensor& b, Formula f) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::dimension,
         "image_cd_mean needs equal dimensions, got " + ad::shape_str(a.shape()) + " and " + ad::shape_str(b.shape()));
  }
  const LabImage la = srgb_to_lab(a);
  const LabImage lb = srgb_to_lab(b);
  double total = 0.0;
  for (std::size_t p = 0; p < la.pixels.size(); ++p) total += delta_e(f, la.pixels[p], lb.pixels[p]);
  return total / static_cast<double>(la.pixels.size());
}

}  // namespace cdflow::color
