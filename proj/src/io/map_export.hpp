// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <string>
#include <vector>

#include "metric/cd_metric.hpp"

namespace cdflow::io {

struct MapExportOptions {
  /// Also write map_scale_k_heat.ppm with a black-red-yellow-white ramp.
  bool heat = false;
};

/// For every scale k (1-based) writes map_scale_k.txt (raw values, one row
/// per line, whitespace-separated) and map_scale_k.pgm (values divided by
/// the map maximum, 8-bit). Creates `out_dir` if needed. Returns the paths
/// written.
std::vector<std::string> export_cd_maps(const metric::CdResult& result, const std::string& out_dir,
                                        const MapExportOptions& options = {});

/// Reads a raw grid written by export_cd_maps.
metric::CdMap read_map_grid(const std::string& path);

}  // namespace cdflow::io
