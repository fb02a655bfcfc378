// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autodiff/tensor.hpp"
#include "flow/flow_model.hpp"

namespace cdflow::train {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place. Contract error when
/// a gradient is missing or mis-shaped.
void adam_step(std::span<ad::Tensor> params, std::span<const ad::Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options = {});

void adam_step(flow::FlowModel& model, std::span<const ad::Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options = {});

}  // namespace cdflow::train
