// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "metric/cd_metric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace cdflow::metric {

namespace {

void require_matching(std::span<const Tensor> fx, std::span<const Tensor> fy) {
  if (fx.size() != fy.size() || fx.empty()) {
    fail(ErrorCode::dimension, "latent stacks have different part counts");
  }
  for (std::size_t i = 0; i < fx.size(); ++i) {
    if (fx[i].shape() != fy[i].shape()) {
      fail(ErrorCode::dimension, "latent part " + std::to_string(i + 1) + " shapes differ: " +
                                     ad::shape_str(fx[i].shape()) + " vs " + ad::shape_str(fy[i].shape()));
    }
  }
}

void require_same_images(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    fail(ErrorCode::dimension,
         "images differ in size: " + ad::shape_str(x.shape()) + " vs " + ad::shape_str(y.shape()));
  }
}

double squared_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

double CdMap::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

std::vector<double> delta_e_scales_from_latents(std::span<const Tensor> fx, std::span<const Tensor> fy) {
  require_matching(fx, fy);
  const std::size_t K = fx.size();
  std::vector<double> out(K);
  double ss = 0.0;
  double dims = 0.0;
  for (std::size_t k = K; k-- > 0;) {
    ss += squared_distance(fx[k], fy[k]);
    dims += static_cast<double>(fx[k].size());
    out[k] = std::sqrt(ss / dims);
  }
  return out;
}

double delta_e_from_latents(std::span<const Tensor> fx, std::span<const Tensor> fy, int k) {
  require_matching(fx, fy);
  if (k < 1 || static_cast<std::size_t>(k) > fx.size()) {
    fail(ErrorCode::domain, "scale index " + std::to_string(k) + " outside 1.." + std::to_string(fx.size()));
  }
  double ss = 0.0;
  double dims = 0.0;
  for (std::size_t i = static_cast<std::size_t>(k - 1); i < fx.size(); ++i) {
    ss += squared_distance(fx[i], fy[i]);
    dims += static_cast<double>(fx[i].size());
  }
  return std::sqrt(ss / dims);
}

std::vector<CdMap> local_cd_maps_from_latents(std::span<const Tensor> fx, std::span<const Tensor> fy) {
  require_matching(fx, fy);
  std::vector<CdMap> maps;
  for (std::size_t k = 0; k < fx.size(); ++k) {
    const Tensor& a = fx[k];
    const Tensor& b = fy[k];
    CdMap m{a.dim(0), a.dim(1), std::vector<double>(a.dim(0) * a.dim(1))};
    const std::size_t c = a.dim(2);
    for (std::size_t p = 0; p < m.values.size(); ++p) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = a[p * c + ch] - b[p * c + ch];
        s += d * d;
      }
      m.values[p] = std::sqrt(s / static_cast<double>(c));
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

double delta_e(const Tensor& x, const Tensor& y, const flow::FlowModel& model) {
  return delta_e_scale(x, y, model, 1);
}

double delta_e_scale(const Tensor& x, const Tensor& y, const flow::FlowModel& model, int k) {
  require_same_images(x, y);
  if (k < 1 || k > model.config().scales) {
    fail(ErrorCode::domain, "scale index " + std::to_string(k) + " outside 1.." +
                                std::to_string(model.config().scales));
  }
  const auto fx = flow::flow_forward(model, x);
  const auto fy = flow::flow_forward(model, y);
  return delta_e_from_latents(fx.parts, fy.parts, k);
}

std::vector<CdMap> local_cd_maps(const Tensor& x, const Tensor& y, const flow::FlowModel& model) {
  require_same_images(x, y);
  const auto fx = flow::flow_forward(model, x);
  const auto fy = flow::flow_forward(model, y);
  return local_cd_maps_from_latents(fx.parts, fy.parts);
}

CdResult compare(const Tensor& x, const Tensor& y, const flow::FlowModel& model) {
  require_same_images(x, y);
  const auto fx = flow::flow_forward(model, x);
  const auto fy = flow::flow_forward(model, y);
  CdResult r;
  r.per_scale = delta_e_scales_from_latents(fx.parts, fy.parts);
  r.delta_e = r.per_scale.front();
  r.maps = local_cd_maps_from_latents(fx.parts, fy.parts);
  return r;
}

std::vector<ad::Var> delta_e_scales(std::span<const ad::Var> fx, std::span<const ad::Var> fy) {
  if (fx.size() != fy.size() || fx.empty()) fail(ErrorCode::dimension, "latent stacks have different part counts");
  const std::size_t K = fx.size();
  std::vector<ad::Var> out(K);
  ad::Var ss;
  double dims = 0.0;
  for (std::size_t k = K; k-- > 0;) {
    ad::Var part = ad::sum(ad::square(ad::sub(fx[k], fy[k])));
    ss = (k + 1 == K) ? part : ad::add(ss, part);
    dims += static_cast<double>(fx[k].size());
    out[k] = ad::sqrt(ad::scale(ss, 1.0 / dims));
  }
  return out;
}

}  // namespace cdflow::metric
