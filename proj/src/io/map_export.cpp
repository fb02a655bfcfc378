// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "io/map_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "autodiff/tensor.hpp"
#include "common/error.hpp"
#include "io/image_io.hpp"

namespace cdflow::io {

namespace fs = std::filesystem;

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); }

// Piecewise-linear black -> red -> yellow -> white.
void heat_color(double t, double rgb[3]) {
  t = std::clamp(t, 0.0, 1.0) * 3.0;
  rgb[0] = std::min(t, 1.0);
  rgb[1] = std::clamp(t - 1.0, 0.0, 1.0);
  rgb[2] = std::clamp(t - 2.0, 0.0, 1.0);
}

}  // namespace

std::vector<std::string> export_cd_maps(const metric::CdResult& result, const std::string& out_dir,
                                        const MapExportOptions& options) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) fail(ErrorCode::output, out_dir + ": cannot create output directory");

  std::vector<std::string> written;
  char buf[64];
  for (std::size_t k = 0; k < result.maps.size(); ++k) {
    const metric::CdMap& m = result.maps[k];
    const std::string stem = (fs::path(out_dir) / ("map_scale_" + std::to_string(k + 1))).string();

    std::ofstream txt(stem + ".txt");
    if (!txt) fail(ErrorCode::output, stem + ".txt: cannot open for writing");
    for (std::size_t y = 0; y < m.height; ++y) {
      for (std::size_t x = 0; x < m.width; ++x) {
        std::snprintf(buf, sizeof buf, "%.17g", m.at(y, x));
        txt << (x ? " " : "") << buf;
      }
      txt << '\n';
    }
    if (!txt.flush()) fail(ErrorCode::output, stem + ".txt: write failed");
    written.push_back(stem + ".txt");

    const double peak = m.max();
    const double inv = peak > 0.0 ? 1.0 / peak : 0.0;
    std::vector<std::uint8_t> gray(m.values.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = to_byte(m.values[i] * inv);
    save_gray(gray, m.height, m.width, stem + ".pgm");
    written.push_back(stem + ".pgm");

    if (options.heat) {
      ad::Tensor rgb({m.height, m.width, 3});
      for (std::size_t i = 0; i < m.values.size(); ++i) heat_color(m.values[i] * inv, &rgb[3 * i]);
      save_image(rgb, stem + "_heat.ppm");
      written.push_back(stem + "_heat.ppm");
    }
  }
  return written;
}

metric::CdMap read_map_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::input, path + ": cannot open map grid");
  metric::CdMap m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::size_t count = 0;
    double v;
    while (row >> v) {
      m.values.push_back(v);
      ++count;
    }
    if (count == 0) continue;
    if (m.height == 0) m.width = count;
    if (count != m.width) fail(ErrorCode::input, path + ": ragged row " + std::to_string(m.height + 1));
    ++m.height;
  }
  return m;
}

}  // namespace cdflow::io
