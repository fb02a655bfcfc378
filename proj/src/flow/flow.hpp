// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "autodiff/tape.hpp"
#include "autodiff/tensor.hpp"
#include "flow/flow_model.hpp"

namespace cdflow::flow {

using ad::Tensor;
using ad::Var;

/// Output of one invertible layer: transformed value and its log|det J|.
template <class V>
struct Transformed {
  V value;
  V log_det;
};

/// Latent parts z_1, z_3, ..., z_{2K-1} (finest first) with the Gaussian
/// prior parameters of each part and the accumulated log-determinant.
/// Prior means / log-scales have the part's shape for conditional priors and
/// per-channel shape {C} for the top prior.
template <class V>
struct LatentStackT {
  std::vector<V> parts;
  std::vector<V> means;
  std::vector<V> log_scales;
  V log_det;
};

using LatentStack = LatentStackT<Tensor>;
using TapedLatents = LatentStackT<Var>;

struct CouplingNet {
  const Tensor& conv1_kernel;
  const Tensor& conv1_bias;
  const Tensor& conv2_kernel;
  const Tensor& conv2_bias;
};

enum class Direction { forward, inverse };

// ---- individual layers (inference path) ---------------------------------------

/// Forward or inverse squeeze; forward requires even spatial extents.
Tensor squeeze(const Tensor& x);
Tensor unsqueeze(const Tensor& x);

/// z' = s * z + t per channel; log_det = h * w * sum(log|s|). Inverse returns
/// the negated log-determinant. Singularity error if any s is zero.
Transformed<Tensor> actnorm(const Tensor& z, const Tensor& s, const Tensor& t, Direction dir);

/// Per-channel (s, t) that standardizes the batch to zero mean and unit
/// variance; a zero-variance channel keeps s = 1 with t = -mean.
std::pair<Tensor, Tensor> actnorm_init(std::span<const Tensor> batch);

/// z' = W z per pixel; log_det = h * w * log|det W|. The inverse solves with
/// the LU factors of W. Singularity error if |det W| <= 1e-12.
Transformed<Tensor> inv_conv(const Tensor& z, const Tensor& w, Direction dir);

/// Affine coupling: the first channel half conditions, the second is scaled by
/// exp(s) and shifted by t, with s = clamp * tanh(raw / clamp).
Transformed<Tensor> affine_coupling(const Tensor& z, const CouplingNet& net, double clamp, Direction dir);

struct SplitResult {
  Tensor latent;
  Tensor carry;
  Tensor mean;
  Tensor log_scale;
};

/// Channel halves (latent, carry) with the latent's conditional prior
/// computed from the carry by a single 3x3 convolution.
SplitResult split(const Tensor& z, const Tensor& prior_kernel, const Tensor& prior_bias);

// ---- whole flow ------------------------------------------------------------------

LatentStack flow_forward(const FlowModel& model, const Tensor& x);
Tensor flow_inverse(const FlowModel& model, const LatentStack& latents);
/// Same, for bare latent parts (priors and log_det are not needed).
Tensor flow_inverse(const FlowModel& model, std::span<const Tensor> parts);

/// Input of the `flat_step`-th actnorm during a forward pass of x.
Tensor actnorm_input(const FlowModel& model, const Tensor& x, std::size_t flat_step);

/// Data-dependent actnorm initialization, step by step in schedule order.
/// Marks the model initialized.
void initialize_actnorm(FlowModel& model, std::span<const Tensor> batch);

/// Sum of Gaussian log-densities of the parts under their priors.
double latent_log_density(const LatentStack& latents);
/// log p_X(x) = log p_Z(f(x)) + log|det df/dx|.
double log_likelihood(const FlowModel& model, const Tensor& x);
double log_likelihood(const LatentStack& latents);

/// Concatenation of all latent parts in stack order.
Tensor flatten_latents(std::span<const Tensor> parts);

// ---- taped path for training ------------------------------------------------------

/// Registers every model parameter as a tape variable, in schedule order.
std::vector<Var> register_parameters(ad::Tape& tape, const FlowModel& model);

/// Forward pass recorded on the tape; `params` from register_parameters.
TapedLatents flow_forward(const FlowModel& model, std::span<const Var> params, Var x);
Var log_likelihood(const TapedLatents& latents);

}  // namespace cdflow::flow
