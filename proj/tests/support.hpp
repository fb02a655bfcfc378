// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "autodiff/tensor.hpp"
#include "flow/flow_model.hpp"

namespace cdflow::testing {

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline ad::Tensor random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return random_tensor({h, w, 3}, rng, 0.0, 1.0);
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Perturbs every parameter so that no layer sits at its identity initialization.
inline void randomize(flow::FlowModel& model, std::uint64_t seed, double strength = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& p : model.parameters()) {
    auto& t = p.value;
    const std::string& name = p.name;
    if (ends_with(name, "actnorm.scale")) {
      for (double& v : t.data()) v = std::exp(0.2 * strength * n(rng));
    } else if (ends_with(name, "mix.weight")) {
      const double c = static_cast<double>(t.dim(0));
      for (double& v : t.data()) v += 0.2 * strength * n(rng) / std::sqrt(c);
    } else if (ends_with(name, "kernel")) {
      const double fan_in = static_cast<double>(t.dim(0) * t.dim(1) * t.dim(2));
      for (double& v : t.data()) v = 0.5 * strength * n(rng) / std::sqrt(fan_in);
    } else {
      for (double& v : t.data()) v = 0.1 * strength * n(rng);
    }
  }
  model.set_actnorm_initialized(true);
}

inline Eigen::MatrixXd to_eigen(const ad::Tensor& m) {
  Eigen::MatrixXd out(m.dim(0), m.dim(1));
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < m.dim(1); ++j) out(i, j) = m[i * m.dim(1) + j];
  return out;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace cdflow::testing
