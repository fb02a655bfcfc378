// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "flow/flow.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>

#include "autodiff/linalg.hpp"
#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace cdflow::flow {

namespace {

constexpr double kMinAbsDet = 1e-12;

const Tensor& value_of(const Tensor& t) { return t; }
const Tensor& value_of(const Var& v) { return v.value(); }

void require_nonzero_scale(const Tensor& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == 0.0) fail(ErrorCode::singular, "actnorm scale is zero in channel " + std::to_string(i));
  }
}

void require_invertible(const Tensor& w) {
  const linalg::LU lu(w);
  if (!(std::abs(lu.det()) > kMinAbsDet)) {
    fail(ErrorCode::singular, "channel-mixing matrix is singular (|det W| <= 1e-12)");
  }
}

void require_even_channels(const Tensor& z, const char* what) {
  if (z.rank() != 3 || z.dim(2) % 2 != 0) {
    fail(ErrorCode::dimension, std::string(what) + " needs an even channel count, got " + ad::shape_str(z.shape()));
  }
}

double pixels(const Tensor& z) { return static_cast<double>(z.dim(0) * z.dim(1)); }

// ---- layers, generic over Tensor / Var -------------------------------------------

template <class V>
Transformed<V> actnorm_forward(const V& z, const V& s, const V& t) {
  require_nonzero_scale(value_of(s));
  V out = ad::add(ad::mul(z, s), t);
  V log_det = ad::scale(ad::sum(ad::log_abs(s)), pixels(value_of(z)));
  return {out, log_det};
}

template <class V>
Transformed<V> inv_conv_forward(const V& z, const V& w) {
  require_invertible(value_of(w));
  V out = ad::channel_matmul(z, w);
  V log_det = ad::scale(ad::log_abs_det(w), pixels(value_of(z)));
  return {out, log_det};
}

template <class V>
struct CouplingParams {
  V k1, b1, k2, b2;
};

// (s, t) of the coupling from the conditioning half.
template <class V>
std::pair<V, V> coupling_scale_shift(const V& cond, const CouplingParams<V>& net, double clamp) {
  V hidden = ad::softplus(ad::conv2d(cond, net.k1, net.b1));
  V out = ad::conv2d(hidden, net.k2, net.b2);
  const std::size_t half = value_of(cond).dim(2);
  if (value_of(out).dim(2) != 2 * half) {
    fail(ErrorCode::dimension, "coupling network emits " + std::to_string(value_of(out).dim(2)) +
                                   " channels, expected " + std::to_string(2 * half));
  }
  V raw = ad::slice_channels(out, 0, half);
  V shift = ad::slice_channels(out, half, 2 * half);
  V log_scale = ad::scale(ad::tanh(ad::scale(raw, 1.0 / clamp)), clamp);
  return {log_scale, shift};
}

template <class V>
Transformed<V> coupling_forward(const V& z, const CouplingParams<V>& net, double clamp) {
  require_even_channels(value_of(z), "affine coupling");
  const std::size_t c = value_of(z).dim(2), half = c / 2;
  V cond = ad::slice_channels(z, 0, half);
  V moving = ad::slice_channels(z, half, c);
  auto [log_scale, shift] = coupling_scale_shift(cond, net, clamp);
  V moved = ad::add(ad::mul(moving, ad::exp(log_scale)), shift);
  return {ad::concat_channels(cond, moved), ad::sum(log_scale)};
}

template <class V>
V gaussian_log_density(const V& z, const V& mean, const V& log_scale) {
  const double n = static_cast<double>(value_of(z).size());
  const double reps = n / static_cast<double>(value_of(log_scale).size());
  V scaled = ad::mul(ad::sub(z, mean), ad::exp(ad::scale(log_scale, -1.0)));
  V quad = ad::scale(ad::sum(ad::square(scaled)), -0.5);
  V norm = ad::scale(ad::sum(log_scale), -reps);
  return ad::add_scalar(ad::add(quad, norm), -0.5 * n * std::log(2.0 * std::numbers::pi));
}

template <class V>
V accumulate(const std::vector<V>& terms) {
  V total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

struct Capture {
  std::size_t step;
  std::optional<Tensor> value;
};

void check_input(const FlowConfig& config, const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != config.height || x.dim(1) != config.width ||
      x.dim(2) != FlowConfig::kInputChannels) {
    fail(ErrorCode::dimension, "flow input " + ad::shape_str(x.shape()) + " does not match configured " +
                                   std::to_string(config.height) + "x" + std::to_string(config.width) + "x3");
  }
}

template <class V, class Get>
LatentStackT<V> forward_generic(const FlowModel& model, Get&& get, V x, Capture* capture) {
  const FlowConfig& config = model.config();
  config.validate();
  check_input(config, value_of(x));

  LatentStackT<V> out;
  std::vector<V> log_dets;
  std::size_t flat = 0;
  V h = x;
  for (int k = 1; k <= config.scales; ++k) {
    const ScaleSlots& scale = model.layout().scales[static_cast<std::size_t>(k - 1)];
    h = ad::squeeze2x2(h);
    for (const StepSlots& s : scale.steps) {
      if constexpr (std::is_same_v<V, Tensor>) {
        if (capture && capture->step == flat) capture->value = h;
      }
      ++flat;
      auto an = actnorm_forward<V>(h, get(s.actnorm_scale), get(s.actnorm_bias));
      auto mix = inv_conv_forward<V>(an.value, get(s.mix));
      CouplingParams<V> net{get(s.conv1_kernel), get(s.conv1_bias), get(s.conv2_kernel), get(s.conv2_bias)};
      auto cp = coupling_forward<V>(mix.value, net, config.clamp);
      h = cp.value;
      log_dets.push_back(an.log_det);
      log_dets.push_back(mix.log_det);
      log_dets.push_back(cp.log_det);
    }
    if (k < config.scales) {
      const std::size_t c = value_of(h).dim(2), half = c / 2;
      V latent = ad::slice_channels(h, 0, half);
      V carry = ad::slice_channels(h, half, c);
      V prior = ad::conv2d(carry, get(scale.prior_kernel), get(scale.prior_bias));
      out.parts.push_back(latent);
      out.means.push_back(ad::slice_channels(prior, 0, half));
      out.log_scales.push_back(ad::slice_channels(prior, half, c));
      h = carry;
    } else {
      out.parts.push_back(h);
      out.means.push_back(get(model.layout().top_mean));
      out.log_scales.push_back(get(model.layout().top_log_scale));
    }
  }
  out.log_det = accumulate(log_dets);
  return out;
}

template <class V>
V log_likelihood_generic(const LatentStackT<V>& latents) {
  std::vector<V> terms;
  for (std::size_t i = 0; i < latents.parts.size(); ++i) {
    terms.push_back(gaussian_log_density(latents.parts[i], latents.means[i], latents.log_scales[i]));
  }
  terms.push_back(latents.log_det);
  return accumulate(terms);
}

CouplingParams<Tensor> coupling_params(const CouplingNet& net) {
  return {net.conv1_kernel, net.conv1_bias, net.conv2_kernel, net.conv2_bias};
}

}  // namespace

// ---- layers ---------------------------------------------------------------------

Tensor squeeze(const Tensor& x) { return ad::squeeze2x2(x); }
Tensor unsqueeze(const Tensor& x) { return ad::unsqueeze2x2(x); }

Transformed<Tensor> actnorm(const Tensor& z, const Tensor& s, const Tensor& t, Direction dir) {
  if (dir == Direction::forward) return actnorm_forward<Tensor>(z, s, t);
  require_nonzero_scale(s);
  const std::size_t c = s.size();
  if (z.rank() != 3 || z.dim(2) != c || t.size() != c) {
    fail(ErrorCode::dimension, "actnorm parameters do not match " + ad::shape_str(z.shape()));
  }
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - t[i % c]) / s[i % c];
  double sum_log = 0.0;
  for (std::size_t i = 0; i < c; ++i) sum_log += std::log(std::abs(s[i]));
  return {out, Tensor::scalar(-pixels(z) * sum_log)};
}

std::pair<Tensor, Tensor> actnorm_init(std::span<const Tensor> batch) {
  if (batch.empty()) fail(ErrorCode::contract, "actnorm_init needs a non-empty batch");
  const std::size_t c = batch.front().shape().back();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  double count = 0.0;
  for (const Tensor& t : batch) {
    if (t.shape().back() != c) fail(ErrorCode::dimension, "actnorm_init batch has mixed channel counts");
    for (std::size_t i = 0; i < t.size(); ++i) mean[i % c] += t[i];
    count += static_cast<double>(t.size() / c);
  }
  for (double& m : mean) m /= count;
  for (const Tensor& t : batch) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = t[i] - mean[i % c];
      var[i % c] += d * d;
    }
  }
  Tensor s({c}), shift({c});
  for (std::size_t i = 0; i < c; ++i) {
    const double v = var[i] / count;
    // Fallback when a channel carries no variation at all.
    const double scale = v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0;
    s[i] = scale;
    shift[i] = -mean[i] * scale;
  }
  return {s, shift};
}

Transformed<Tensor> inv_conv(const Tensor& z, const Tensor& w, Direction dir) {
  if (dir == Direction::forward) return inv_conv_forward<Tensor>(z, w);
  const linalg::LU lu(w);
  if (!(std::abs(lu.det()) > kMinAbsDet)) {
    fail(ErrorCode::singular, "channel-mixing matrix is singular (|det W| <= 1e-12)");
  }
  if (z.rank() != 3 || z.dim(2) != lu.n()) {
    fail(ErrorCode::dimension, "inv_conv matrix does not match " + ad::shape_str(z.shape()));
  }
  Tensor out = z;
  const std::size_t c = lu.n();
  for (std::size_t p = 0; p < z.size() / c; ++p) lu.solve_in_place(&out[p * c]);
  return {out, Tensor::scalar(-pixels(z) * lu.log_abs_det())};
}

Transformed<Tensor> affine_coupling(const Tensor& z, const CouplingNet& net, double clamp, Direction dir) {
  if (dir == Direction::forward) return coupling_forward<Tensor>(z, coupling_params(net), clamp);
  require_even_channels(z, "affine coupling");
  const std::size_t c = z.dim(2), half = c / 2;
  Tensor cond = ad::slice_channels(z, 0, half);
  Tensor moved = ad::slice_channels(z, half, c);
  auto [log_scale, shift] = coupling_scale_shift<Tensor>(cond, coupling_params(net), clamp);
  Tensor moving(moved.shape());
  for (std::size_t i = 0; i < moved.size(); ++i) moving[i] = (moved[i] - shift[i]) * std::exp(-log_scale[i]);
  return {ad::concat_channels(cond, moving), Tensor::scalar(-ad::sum(log_scale).item())};
}

SplitResult split(const Tensor& z, const Tensor& prior_kernel, const Tensor& prior_bias) {
  require_even_channels(z, "split");
  const std::size_t c = z.dim(2), half = c / 2;
  SplitResult r{ad::slice_channels(z, 0, half), ad::slice_channels(z, half, c), {}, {}};
  const Tensor prior = ad::conv2d(r.carry, prior_kernel, prior_bias);
  r.mean = ad::slice_channels(prior, 0, half);
  r.log_scale = ad::slice_channels(prior, half, c);
  return r;
}

// ---- whole flow -------------------------------------------------------------------

LatentStack flow_forward(const FlowModel& model, const Tensor& x) {
  auto get = [&](std::size_t slot) -> const Tensor& { return model.param(slot); };
  return forward_generic<Tensor>(model, get, x, nullptr);
}

Tensor actnorm_input(const FlowModel& model, const Tensor& x, std::size_t flat_step) {
  if (flat_step >= model.step_count()) fail(ErrorCode::domain, "actnorm step index out of range");
  auto get = [&](std::size_t slot) -> const Tensor& { return model.param(slot); };
  Capture capture{flat_step, std::nullopt};
  forward_generic<Tensor>(model, get, x, &capture);
  return std::move(*capture.value);
}

void initialize_actnorm(FlowModel& model, std::span<const Tensor> batch) {
  if (batch.empty()) fail(ErrorCode::contract, "actnorm initialization needs a non-empty batch");
  for (std::size_t step = 0; step < model.step_count(); ++step) {
    std::vector<Tensor> inputs;
    inputs.reserve(batch.size());
    for (const Tensor& x : batch) inputs.push_back(actnorm_input(model, x, step));
    auto [s, t] = actnorm_init(inputs);
    const StepSlots& slots = model.step(step);
    model.param(slots.actnorm_scale) = std::move(s);
    model.param(slots.actnorm_bias) = std::move(t);
  }
  model.set_actnorm_initialized(true);
}

Tensor flow_inverse(const FlowModel& model, std::span<const Tensor> parts) {
  const FlowConfig& config = model.config();
  config.validate();
  if (parts.size() != static_cast<std::size_t>(config.scales)) {
    fail(ErrorCode::dimension, "latent stack has " + std::to_string(parts.size()) + " parts, expected " +
                                   std::to_string(config.scales));
  }
  for (int k = 1; k <= config.scales; ++k) {
    const ad::Shape expected{config.height_at(k), config.width_at(k), config.latent_channels(k)};
    if (parts[static_cast<std::size_t>(k - 1)].shape() != expected) {
      fail(ErrorCode::dimension, "latent part " + std::to_string(k) + " has shape " +
                                     ad::shape_str(parts[static_cast<std::size_t>(k - 1)].shape()) +
                                     ", expected " + ad::shape_str(expected));
    }
  }

  Tensor h = parts.back();
  for (int k = config.scales; k >= 1; --k) {
    const ScaleSlots& scale = model.layout().scales[static_cast<std::size_t>(k - 1)];
    if (k < config.scales) h = ad::concat_channels(parts[static_cast<std::size_t>(k - 1)], h);
    for (auto it = scale.steps.rbegin(); it != scale.steps.rend(); ++it) {
      const StepSlots& s = *it;
      const CouplingNet net{model.param(s.conv1_kernel), model.param(s.conv1_bias), model.param(s.conv2_kernel),
                            model.param(s.conv2_bias)};
      h = affine_coupling(h, net, config.clamp, Direction::inverse).value;
      h = inv_conv(h, model.param(s.mix), Direction::inverse).value;
      h = actnorm(h, model.param(s.actnorm_scale), model.param(s.actnorm_bias), Direction::inverse).value;
    }
    h = ad::unsqueeze2x2(h);
  }
  return h;
}

Tensor flow_inverse(const FlowModel& model, const LatentStack& latents) {
  return flow_inverse(model, std::span<const Tensor>(latents.parts));
}

double latent_log_density(const LatentStack& latents) {
  double total = 0.0;
  for (std::size_t i = 0; i < latents.parts.size(); ++i) {
    total += gaussian_log_density(latents.parts[i], latents.means[i], latents.log_scales[i]).item();
  }
  return total;
}

double log_likelihood(const LatentStack& latents) {
  const double ll = log_likelihood_generic(latents).item();
  if (!std::isfinite(ll)) fail(ErrorCode::numeric, "log-likelihood is not finite");
  return ll;
}

double log_likelihood(const FlowModel& model, const Tensor& x) { return log_likelihood(flow_forward(model, x)); }

Tensor flatten_latents(std::span<const Tensor> parts) {
  std::size_t n = 0;
  for (const Tensor& p : parts) n += p.size();
  std::vector<double> flat;
  flat.reserve(n);
  for (const Tensor& p : parts) flat.insert(flat.end(), p.data().begin(), p.data().end());
  return Tensor({n}, std::move(flat));
}

std::vector<Var> register_parameters(ad::Tape& tape, const FlowModel& model) {
  std::vector<Var> vars;
  vars.reserve(model.parameters().size());
  for (const Parameter& p : model.parameters()) vars.push_back(tape.variable(p.value));
  return vars;
}

TapedLatents flow_forward(const FlowModel& model, std::span<const Var> params, Var x) {
  if (params.size() != model.parameters().size()) {
    fail(ErrorCode::contract, "taped forward needs one variable per model parameter");
  }
  auto get = [&](std::size_t slot) -> Var { return params[slot]; };
  return forward_generic<Var>(model, get, x, nullptr);
}

Var log_likelihood(const TapedLatents& latents) { return log_likelihood_generic(latents); }

}  // namespace cdflow::flow
