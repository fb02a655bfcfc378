// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <string>

#include "autodiff/tensor.hpp"
#include "common/error.hpp"

namespace cdflow::ad {

/// Central-difference gradient of a scalar function:
///   (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
template <class F>
Tensor finite_diff_grad(F&& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::domain, "finite_diff_grad needs eps > 0, got " + std::to_string(eps));
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(static_cast<const Tensor&>(probe));
    probe[i] = saved - eps;
    const double down = f(static_cast<const Tensor&>(probe));
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace cdflow::ad
