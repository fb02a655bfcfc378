// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "flow/flow_model.hpp"

#include <cmath>
#include <random>

#include "autodiff/linalg.hpp"
#include "common/error.hpp"

namespace cdflow::flow {

void FlowConfig::validate() const {
  if (scales < 2) fail(ErrorCode::dimension, "flow needs at least 2 scales, got " + std::to_string(scales));
  if (scales > 16) fail(ErrorCode::dimension, "flow scale count too large: " + std::to_string(scales));
  if (steps < 1) fail(ErrorCode::dimension, "flow needs at least 1 step per scale");
  if (hidden_width < 1) fail(ErrorCode::dimension, "coupling hidden width must be positive");
  if (!(clamp > 0.0)) fail(ErrorCode::domain, "coupling clamp must be positive");
  const std::size_t block = std::size_t{1} << scales;
  if (height == 0 || width == 0 || height % block != 0 || width % block != 0) {
    fail(ErrorCode::dimension, "image " + std::to_string(height) + "x" + std::to_string(width) +
                                   " is not divisible by 2^" + std::to_string(scales) + " = " +
                                   std::to_string(block));
  }
}

std::size_t FlowConfig::channels(int k) const {
  // 3 * 4^k / 2^(k-1): each scale quadruples by squeeze, earlier splits halve.
  return kInputChannels * (std::size_t{1} << (k + 1));
}

std::vector<std::pair<std::string, ad::Shape>> parameter_schedule(const FlowConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, ad::Shape>> out;
  const std::size_t hidden = static_cast<std::size_t>(config.hidden_width);
  for (int k = 1; k <= config.scales; ++k) {
    const std::size_t c = config.channels(k), half = c / 2;
    for (int l = 1; l <= config.steps; ++l) {
      const std::string p = "scale" + std::to_string(k) + ".step" + std::to_string(l) + ".";
      out.emplace_back(p + "actnorm.scale", ad::Shape{c});
      out.emplace_back(p + "actnorm.bias", ad::Shape{c});
      out.emplace_back(p + "mix.weight", ad::Shape{c, c});
      out.emplace_back(p + "coupling.conv1.kernel", ad::Shape{3, 3, half, hidden});
      out.emplace_back(p + "coupling.conv1.bias", ad::Shape{hidden});
      out.emplace_back(p + "coupling.conv2.kernel", ad::Shape{3, 3, hidden, c});
      out.emplace_back(p + "coupling.conv2.bias", ad::Shape{c});
    }
    if (k < config.scales) {
      const std::string p = "scale" + std::to_string(k) + ".prior.";
      out.emplace_back(p + "kernel", ad::Shape{3, 3, half, c});
      out.emplace_back(p + "bias", ad::Shape{c});
    }
  }
  const std::size_t top = config.channels(config.scales);
  out.emplace_back("top.prior.mean", ad::Shape{top});
  out.emplace_back("top.prior.log_scale", ad::Shape{top});
  return out;
}

ParameterLayout parameter_layout(const FlowConfig& config) {
  ParameterLayout layout;
  std::size_t next = 0;
  for (int k = 1; k <= config.scales; ++k) {
    ScaleSlots scale;
    for (int l = 1; l <= config.steps; ++l) {
      StepSlots s{};
      s.actnorm_scale = next++;
      s.actnorm_bias = next++;
      s.mix = next++;
      s.conv1_kernel = next++;
      s.conv1_bias = next++;
      s.conv2_kernel = next++;
      s.conv2_bias = next++;
      scale.steps.push_back(s);
    }
    if (k < config.scales) {
      scale.prior_kernel = next++;
      scale.prior_bias = next++;
    }
    layout.scales.push_back(std::move(scale));
  }
  layout.top_mean = next++;
  layout.top_log_scale = next++;
  return layout;
}

ad::Tensor random_orthogonal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Rows are orthonormalized in place (modified Gram-Schmidt, two passes).
  std::vector<double> m(n * n);
  for (double& v : m) v = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &m[i * n];
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        const double* prev = &m[j * n];
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) dot += row[c] * prev[c];
        for (std::size_t c = 0; c < n; ++c) row[c] -= dot * prev[c];
      }
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < n; ++c) norm += row[c] * row[c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < n; ++c) row[c] /= norm;
  }
  return ad::Tensor({n, n}, std::move(m));
}

FlowModel::FlowModel(const FlowConfig& config, std::uint64_t seed, FlowInit init)
    : config_(config), layout_(parameter_layout(config)) {
  const auto schedule = parameter_schedule(config_);
  params_.reserve(schedule.size());
  for (const auto& [name, shape] : schedule) params_.push_back({name, ad::Tensor(shape, 0.0)});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const ScaleSlots& scale : layout_.scales) {
    for (const StepSlots& s : scale.steps) {
      params_[s.actnorm_scale].value.fill(1.0);
      const std::size_t c = params_[s.mix].value.dim(0);
      params_[s.mix].value = init == FlowInit::identity ? linalg::identity(c) : random_orthogonal(c, rng());
      ad::Tensor& k1 = params_[s.conv1_kernel].value;
      const double std1 = 1.0 / std::sqrt(static_cast<double>(k1.dim(0) * k1.dim(1) * k1.dim(2)));
      for (double& v : k1.data()) v = 0.05 * std1 * normal(rng);
    }
  }
}

FlowModel::FlowModel(const FlowConfig& config, std::vector<Parameter> parameters, bool actnorm_initialized)
    : config_(config), layout_(parameter_layout(config)), params_(std::move(parameters)),
      actnorm_initialized_(actnorm_initialized) {
  const auto schedule = parameter_schedule(config_);
  if (schedule.size() != params_.size()) {
    fail(ErrorCode::format, "expected " + std::to_string(schedule.size()) + " parameters for this config, got " +
                                std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].first != params_[i].name || schedule[i].second != params_[i].value.shape()) {
      fail(ErrorCode::format, "parameter " + std::to_string(i) + " is '" + params_[i].name + "' " +
                                  ad::shape_str(params_[i].value.shape()) + ", expected '" + schedule[i].first +
                                  "' " + ad::shape_str(schedule[i].second));
    }
  }
}

std::size_t FlowModel::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t FlowModel::step_count() const {
  return static_cast<std::size_t>(config_.scales) * static_cast<std::size_t>(config_.steps);
}

const StepSlots& FlowModel::step(std::size_t flat_index) const {
  const std::size_t per = static_cast<std::size_t>(config_.steps);
  return layout_.scales.at(flat_index / per).steps.at(flat_index % per);
}

}  // namespace cdflow::flow
