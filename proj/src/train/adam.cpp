// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "train/adam.hpp"

#include <cmath>
#include <string>

#include "common/error.hpp"

namespace cdflow::train {

void adam_step(std::span<ad::Tensor> params, std::span<const ad::Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options) {
  if (grads.size() != params.size()) {
    fail(ErrorCode::contract, "adam_step got " + std::to_string(grads.size()) + " gradients for " +
                                  std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      fail(ErrorCode::contract, "gradient " + std::to_string(i) + " is missing or has shape " +
                                    ad::shape_str(grads[i].shape()) + ", expected " +
                                    ad::shape_str(params[i].shape()));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape(), 0.0);
      state.second_moment.emplace_back(p.shape(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& m = state.first_moment[i];
    ad::Tensor& v = state.second_moment[i];
    const ad::Tensor& g = grads[i];
    ad::Tensor& p = params[i];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = options.beta1 * m[e] + (1.0 - options.beta1) * g[e];
      v[e] = options.beta2 * v[e] + (1.0 - options.beta2) * g[e] * g[e];
      const double m_hat = m[e] / correction1;
      const double v_hat = v[e] / correction2;
      p[e] -= lr * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

void adam_step(flow::FlowModel& model, std::span<const ad::Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options) {
  std::vector<ad::Tensor> params;
  params.reserve(model.parameters().size());
  for (auto& p : model.parameters()) params.push_back(std::move(p.value));
  try {
    adam_step(params, grads, state, lr, options);
  } catch (...) {
    for (std::size_t i = 0; i < params.size(); ++i) model.parameters()[i].value = std::move(params[i]);
    throw;
  }
  for (std::size_t i = 0; i < params.size(); ++i) model.parameters()[i].value = std::move(params[i]);
}

}  // namespace cdflow::train
