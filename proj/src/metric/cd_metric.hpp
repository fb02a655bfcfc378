// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "autodiff/tape.hpp"
#include "autodiff/tensor.hpp"
#include "flow/flow.hpp"

namespace cdflow::metric {

using ad::Tensor;

/// Local color differences at one scale, row-major height x width.
struct CdMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double max() const;
};

struct CdResult {
  double delta_e = 0.0;
  /// Delta E_k for k = 1..K; per_scale[0] == delta_e.
  std::vector<double> per_scale;
  /// One map per scale, finest first.
  std::vector<CdMap> maps;
};

/// Root-mean-square latent distance over the parts of scales k..K (1-based).
double delta_e_from_latents(std::span<const Tensor> fx, std::span<const Tensor> fy, int k = 1);

/// All K per-scale distances from two latent stacks.
std::vector<double> delta_e_scales_from_latents(std::span<const Tensor> fx, std::span<const Tensor> fy);

/// Per-location channel RMS of the latent difference at every scale.
std::vector<CdMap> local_cd_maps_from_latents(std::span<const Tensor> fx, std::span<const Tensor> fy);

double delta_e(const Tensor& x, const Tensor& y, const flow::FlowModel& model);
/// Domain error unless 1 <= k <= K.
double delta_e_scale(const Tensor& x, const Tensor& y, const flow::FlowModel& model, int k);
std::vector<CdMap> local_cd_maps(const Tensor& x, const Tensor& y, const flow::FlowModel& model);
CdResult compare(const Tensor& x, const Tensor& y, const flow::FlowModel& model);

/// Taped per-scale distances Delta E_1..Delta E_K for training.
std::vector<ad::Var> delta_e_scales(std::span<const ad::Var> fx, std::span<const ad::Var> fy);

}  // namespace cdflow::metric
