// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "io/manifest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "common/error.hpp"
#include "io/image_io.hpp"

namespace cdflow::io {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void line_error(const std::string& path, std::size_t line, const std::string& what) {
  fail(ErrorCode::input, path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::input, path + ": cannot open manifest");
  const fs::path base = fs::path(path).parent_path();

  std::vector<ManifestEntry> entries;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw);
    if (text.empty() || text[0] == '#' || text == "path_a,path_b,delta_v") continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = text.find(',', start);
      fields.push_back(trim(text.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 3) line_error(path, line, "expected 3 comma-separated fields, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) line_error(path, line, "empty image path");

    ManifestEntry e;
    e.line = line;
    const std::string& label = fields[2];
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), e.delta_v);
    if (ec != std::errc() || ptr != label.data() + label.size() || !std::isfinite(e.delta_v))
      line_error(path, line, "delta_v '" + label + "' is not a real number");
    if (e.delta_v < 0.0) line_error(path, line, "delta_v must be non-negative, got " + label);

    for (int i = 0; i < 2; ++i) {
      fs::path p(fields[i]);
      if (p.is_relative()) p = base / p;
      if (!fs::is_regular_file(p)) fail(ErrorCode::input, p.string() + ": image not found (manifest line " + std::to_string(line) + ")");
      (i == 0 ? e.path_a : e.path_b) = p.string();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<train::LabeledPair> load_pairs(const std::vector<ManifestEntry>& entries, const LoadOptions& options) {
  std::vector<train::LabeledPair> pairs;
  pairs.reserve(entries.size());
  for (const auto& e : entries) {
    train::LabeledPair p;
    p.image_a = load_image(e.path_a);
    p.image_b = load_image(e.path_b);
    if (p.image_a.shape() != p.image_b.shape())
      fail(ErrorCode::dimension, "manifest line " + std::to_string(e.line) + ": " + e.path_a + " and " + e.path_b +
                                     " differ in size");
    if (options.crop_multiple > 0) {
      p.image_a = center_crop(p.image_a, options.crop_multiple);
      p.image_b = center_crop(p.image_b, options.crop_multiple);
    }
    p.delta_v = e.delta_v;
    p.quantized = true;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::output, path + ": cannot open for writing");
  out << "path_a,path_b,delta_v\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.delta_v);
    out << e.path_a << ',' << e.path_b << ',' << buf << '\n';
  }
  if (!out) fail(ErrorCode::output, path + ": write failed");
}

}  // namespace cdflow::io
