// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "autodiff/tape.hpp"
#include "autodiff/tensor.hpp"
#include "flow/flow_model.hpp"

namespace cdflow::train {

using ad::Tensor;

/// An image pair with its perceptual color difference label.
struct LabeledPair {
  Tensor image_a;
  Tensor image_b;
  double delta_v = 0.0;
  /// Pixels came from an 8-bit source; enables dequantization noise in the
  /// likelihood term.
  bool quantized = false;
};

/// Weights and options of the batch objective
///   mean over pairs of [ loss_ms + lambda * (nl(x) + nl(y)) ].
struct ObjectiveOptions {
  double lambda = 1e-4;
  int p = 2;
  /// Divide each negative log-likelihood by the input dimension.
  bool nll_per_dim = true;
  /// Add U(0, 1/256) noise to quantized images inside the likelihood term.
  bool dequantize = true;
};

/// |delta_e - delta_v|^p, p in {1, 2}.
double penalty(double delta_e, double delta_v, int p);

/// Single-scale pair loss.
double loss_pair(const Tensor& x, const Tensor& y, double delta_v, const flow::FlowModel& model, int p);
/// Sum over scales of penalty(Delta E_k, delta_v), given the K distances.
double loss_ms_from_scales(std::span<const double> delta_e_k, double delta_v, int p);
double loss_ms(const Tensor& x, const Tensor& y, double delta_v, const flow::FlowModel& model, int p);
/// Negative log-likelihood -log p_X(x), summed over all dimensions.
double loss_nl(const Tensor& x, const flow::FlowModel& model);

struct BatchLoss {
  double total = 0.0;
  double loss_ms = 0.0;  // batch mean of loss_ms
  double loss_nl = 0.0;  // batch mean of nl(x) + nl(y) as weighted by lambda
};

/// Objective value without gradients. Dequantization noise is not applied.
BatchLoss batch_loss(std::span<const LabeledPair> batch, const flow::FlowModel& model,
                     const ObjectiveOptions& options);

/// Per-pair objective recorded on a tape, already divided by `batch_size`.
struct TapedPairLoss {
  ad::Var total;
  double loss_ms = 0.0;
  double loss_nl = 0.0;
};

TapedPairLoss taped_pair_loss(ad::Tape& tape, std::span<const ad::Var> params, const flow::FlowModel& model,
                              const LabeledPair& pair, const ObjectiveOptions& options, std::size_t batch_size,
                              std::mt19937_64* noise_rng);

/// Objective value and gradient for every parameter, in schedule order.
struct LossAndGrad {
  BatchLoss loss;
  std::vector<Tensor> grads;
};

LossAndGrad batch_loss_and_grad(std::span<const LabeledPair> batch, const flow::FlowModel& model,
                                const ObjectiveOptions& options, std::mt19937_64* noise_rng = nullptr);

}  // namespace cdflow::train
