// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "autodiff/tensor.hpp"

namespace cdflow::flow {

/// Architecture hyperparameters. Scale k (1-based) squeezes, runs `steps`
/// flow steps, and (for k < scales) splits off half of its channels.
struct FlowConfig {
  int scales = 3;
  int steps = 2;
  int hidden_width = 32;
  double clamp = 2.0;
  std::size_t height = 32;
  std::size_t width = 32;

  static constexpr std::size_t kInputChannels = 3;

  /// Dimension error unless scales >= 2, steps >= 1, hidden_width >= 1,
  /// clamp > 0 and both extents divisible by 2^scales.
  void validate() const;

  /// Channel count inside scale k, after its squeeze.
  std::size_t channels(int k) const;
  std::size_t height_at(int k) const { return height >> k; }
  std::size_t width_at(int k) const { return width >> k; }
  /// Channels of the latent part emitted by scale k.
  std::size_t latent_channels(int k) const { return k < scales ? channels(k) / 2 : channels(k); }
  std::size_t latent_size(int k) const { return height_at(k) * width_at(k) * latent_channels(k); }
  /// Input dimensionality H * W * 3.
  std::size_t dims() const { return height * width * kInputChannels; }

  bool operator==(const FlowConfig&) const = default;
};

struct Parameter {
  std::string name;
  ad::Tensor value;
};

/// Parameter indices for one flow step.
struct StepSlots {
  std::size_t actnorm_scale;
  std::size_t actnorm_bias;
  std::size_t mix;
  std::size_t conv1_kernel;
  std::size_t conv1_bias;
  std::size_t conv2_kernel;
  std::size_t conv2_bias;
};

/// Parameter indices for one scale. The prior slots are unused at the last
/// scale, whose prior is the model-level top_mean / top_log_scale.
struct ScaleSlots {
  std::vector<StepSlots> steps;
  std::size_t prior_kernel = 0;
  std::size_t prior_bias = 0;
};

struct ParameterLayout {
  std::vector<ScaleSlots> scales;
  std::size_t top_mean = 0;
  std::size_t top_log_scale = 0;
};

/// (name, shape) of every parameter in schedule order. A pure function of
/// the config; checkpoints store parameters in exactly this order.
std::vector<std::pair<std::string, ad::Shape>> parameter_schedule(const FlowConfig& config);
ParameterLayout parameter_layout(const FlowConfig& config);

enum class FlowInit {
  /// Random orthogonal mixing matrices, small random first coupling layer.
  random,
  /// Mixing matrices set to the identity; the flow is a pure re-arrangement.
  identity,
};

/// All learnable state of the flow. Every step starts as the identity map:
/// actnorm s=1, t=0; zero final coupling layer; zero prior networks.
class FlowModel {
 public:
  explicit FlowModel(const FlowConfig& config, std::uint64_t seed = 0, FlowInit init = FlowInit::random);
  /// Adopts loaded parameters; validates names and shapes against the schedule.
  FlowModel(const FlowConfig& config, std::vector<Parameter> parameters, bool actnorm_initialized);

  const FlowConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const ad::Tensor& param(std::size_t slot) const { return params_[slot].value; }
  ad::Tensor& param(std::size_t slot) { return params_[slot].value; }

  /// Total number of scalar parameters.
  std::size_t scalar_count() const;

  bool actnorm_initialized() const { return actnorm_initialized_; }
  void set_actnorm_initialized(bool v) { actnorm_initialized_ = v; }

  /// Number of flow steps across all scales (scales * steps).
  std::size_t step_count() const;
  const StepSlots& step(std::size_t flat_index) const;

 private:
  FlowConfig config_;
  ParameterLayout layout_;
  std::vector<Parameter> params_;
  bool actnorm_initialized_ = false;
};

/// Random orthogonal n x n matrix (Gram-Schmidt on a Gaussian matrix).
ad::Tensor random_orthogonal(std::size_t n, std::uint64_t seed);

}  // namespace cdflow::flow
