// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "train/losses.hpp"

#include <cmath>
#include <string>

#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "flow/flow.hpp"
#include "metric/cd_metric.hpp"

namespace cdflow::train {

namespace {

void require_p(int p) {
  if (p != 1 && p != 2) fail(ErrorCode::domain, "loss exponent p must be 1 or 2, got " + std::to_string(p));
}

ad::Var taped_penalty(ad::Var delta_e, double delta_v, int p) {
  ad::Var diff = ad::add_scalar(delta_e, -delta_v);
  return p == 1 ? ad::abs(diff) : ad::square(diff);
}

Tensor dequantized(const Tensor& x, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> noise(0.0, 1.0 / 256.0);
  Tensor out = x;
  for (double& v : out.data()) v += noise(rng);
  return out;
}

}  // namespace

double penalty(double delta_e, double delta_v, int p) {
  require_p(p);
  const double d = std::abs(delta_e - delta_v);
  return p == 1 ? d : d * d;
}

double loss_pair(const Tensor& x, const Tensor& y, double delta_v, const flow::FlowModel& model, int p) {
  return penalty(metric::delta_e(x, y, model), delta_v, p);
}

double loss_ms_from_scales(std::span<const double> delta_e_k, double delta_v, int p) {
  double total = 0.0;
  for (double d : delta_e_k) total += penalty(d, delta_v, p);
  return total;
}

double loss_ms(const Tensor& x, const Tensor& y, double delta_v, const flow::FlowModel& model, int p) {
  const auto fx = flow::flow_forward(model, x);
  const auto fy = flow::flow_forward(model, y);
  const auto scales = metric::delta_e_scales_from_latents(fx.parts, fy.parts);
  return loss_ms_from_scales(scales, delta_v, p);
}

double loss_nl(const Tensor& x, const flow::FlowModel& model) {
  const double nl = -flow::log_likelihood(model, x);
  if (!std::isfinite(nl)) fail(ErrorCode::numeric, "negative log-likelihood is not finite");
  return nl;
}

BatchLoss batch_loss(std::span<const LabeledPair> batch, const flow::FlowModel& model,
                     const ObjectiveOptions& options) {
  if (batch.empty()) fail(ErrorCode::contract, "batch_loss needs a non-empty batch");
  require_p(options.p);
  const double nl_scale = options.nll_per_dim ? 1.0 / static_cast<double>(model.config().dims()) : 1.0;
  BatchLoss out;
  for (const LabeledPair& pair : batch) {
    const auto fx = flow::flow_forward(model, pair.image_a);
    const auto fy = flow::flow_forward(model, pair.image_b);
    const auto scales = metric::delta_e_scales_from_latents(fx.parts, fy.parts);
    const double ms = loss_ms_from_scales(scales, pair.delta_v, options.p);
    const double nl = -(flow::log_likelihood(fx) + flow::log_likelihood(fy)) * nl_scale;
    out.loss_ms += ms;
    out.loss_nl += nl;
  }
  const double n = static_cast<double>(batch.size());
  out.loss_ms /= n;
  out.loss_nl /= n;
  out.total = out.loss_ms + options.lambda * out.loss_nl;
  return out;
}

TapedPairLoss taped_pair_loss(ad::Tape& tape, std::span<const ad::Var> params, const flow::FlowModel& model,
                              const LabeledPair& pair, const ObjectiveOptions& options, std::size_t batch_size,
                              std::mt19937_64* noise_rng) {
  require_p(options.p);
  const double nl_scale = options.nll_per_dim ? 1.0 / static_cast<double>(model.config().dims()) : 1.0;
  const double inv_batch = 1.0 / static_cast<double>(batch_size);

  const auto fx = flow::flow_forward(model, params, tape.constant(pair.image_a));
  const auto fy = flow::flow_forward(model, params, tape.constant(pair.image_b));
  const auto scales = metric::delta_e_scales(fx.parts, fy.parts);
  ad::Var ms = taped_penalty(scales[0], pair.delta_v, options.p);
  for (std::size_t k = 1; k < scales.size(); ++k) ms = ad::add(ms, taped_penalty(scales[k], pair.delta_v, options.p));

  ad::Var ll;
  if (pair.quantized && options.dequantize && noise_rng) {
    const auto nx = flow::flow_forward(model, params, tape.constant(dequantized(pair.image_a, *noise_rng)));
    const auto ny = flow::flow_forward(model, params, tape.constant(dequantized(pair.image_b, *noise_rng)));
    ll = ad::add(flow::log_likelihood(nx), flow::log_likelihood(ny));
  } else {
    ll = ad::add(flow::log_likelihood(fx), flow::log_likelihood(fy));
  }
  ad::Var nl = ad::scale(ll, -nl_scale);

  TapedPairLoss out;
  out.loss_ms = ms.value().item();
  out.loss_nl = nl.value().item();
  out.total = ad::scale(ad::add(ms, ad::scale(nl, options.lambda)), inv_batch);
  return out;
}

LossAndGrad batch_loss_and_grad(std::span<const LabeledPair> batch, const flow::FlowModel& model,
                                const ObjectiveOptions& options, std::mt19937_64* noise_rng) {
  if (batch.empty()) fail(ErrorCode::contract, "batch_loss needs a non-empty batch");
  LossAndGrad out;
  out.grads.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) out.grads.emplace_back(p.value.shape(), 0.0);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Tape tape;
    const auto params = flow::register_parameters(tape, model);
    const auto pl = taped_pair_loss(tape, params, model, batch[i], options, batch.size(), noise_rng);
    const double total = pl.total.value().item();
    if (!std::isfinite(total)) {
      fail(ErrorCode::numeric, "non-finite loss for pair " + std::to_string(i) + " of the batch");
    }
    const ad::Gradients g = tape.backward(pl.total);
    for (std::size_t j = 0; j < params.size(); ++j) {
      const Tensor& gj = g.of(params[j]);
      for (std::size_t e = 0; e < gj.size(); ++e) out.grads[j][e] += gj[e];
    }
    out.loss.loss_ms += pl.loss_ms;
    out.loss.loss_nl += pl.loss_nl;
  }
  const double n = static_cast<double>(batch.size());
  out.loss.loss_ms /= n;
  out.loss.loss_nl /= n;
  out.loss.total = out.loss.loss_ms + options.lambda * out.loss.loss_nl;
  return out;
}

}  // namespace cdflow::train
