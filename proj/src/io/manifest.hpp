// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "train/losses.hpp"

namespace cdflow::io {

struct ManifestEntry {
  std::string path_a;
  std::string path_b;
  double delta_v = 0.0;
  std::size_t line = 0;
};

/// Reads "path_a,path_b,delta_v" rows. Blank lines, lines starting with '#'
/// and a literal "path_a,path_b,delta_v" header are skipped. Relative image
/// paths resolve against the manifest's directory. Input error with the line
/// number for malformed rows or negative labels, and with the path for
/// missing images.
std::vector<ManifestEntry> parse_manifest(const std::string& path);

struct LoadOptions {
  /// Crop each image to the largest centered multiple of this value; 0 keeps
  /// images as they are.
  std::size_t crop_multiple = 0;
};

/// Loads every pair. Pairs are marked as quantized (8-bit sources).
std::vector<train::LabeledPair> load_pairs(const std::vector<ManifestEntry>& entries, const LoadOptions& options = {});

/// Writes a manifest with the given rows, paths verbatim.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace cdflow::io
