// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "common/error.hpp"
#include "flow/checkpoint.hpp"
#include "flow/flow.hpp"
#include "train/adam.hpp"

namespace cdflow::train {

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorCode::contract, "batch_size must be >= 1");
  if (!(lr_init > 0.0)) fail(ErrorCode::contract, "lr_init must be > 0");
  if (!(lr_decay_factor > 0.0)) fail(ErrorCode::contract, "lr_decay_factor must be > 0");
  if (decay_every_epochs < 1) fail(ErrorCode::contract, "decay_every_epochs must be >= 1");
  if (epochs < 0) fail(ErrorCode::contract, "epochs must be >= 0");
  if (!(objective.lambda >= 0.0)) fail(ErrorCode::contract, "lambda must be >= 0");
  if (objective.p != 1 && objective.p != 2) fail(ErrorCode::contract, "p must be 1 or 2");
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  if (epoch < 0) fail(ErrorCode::domain, "epoch must be >= 0");
  return config.lr_init / std::pow(config.lr_decay_factor, epoch / config.decay_every_epochs);
}

std::string format_batch_record(const BatchRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%.10g,%.10g", r.epoch, r.batch, r.loss_ms, r.loss_nl, r.total);
  return buf;
}

TrainLog train(flow::FlowModel& model, std::span<const LabeledPair> dataset, const TrainConfig& config,
               const TrainHooks& hooks) {
  config.validate();
  if (dataset.empty()) fail(ErrorCode::contract, "training needs a non-empty dataset");

  TrainLog log;
  if (config.epochs == 0) return log;

  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 noise_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam;
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with an explicit draw so the order depends only on the seed.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    const double lr = lr_at_epoch(config, epoch);
    EpochRecord er{epoch, lr, 0.0, 0.0, 0.0};
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<LabeledPair> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);

      if (!model.actnorm_initialized()) {
        std::vector<ad::Tensor> images;
        for (const auto& p : batch) {
          images.push_back(p.image_a);
          images.push_back(p.image_b);
        }
        flow::initialize_actnorm(model, images);
      }

      LossAndGrad lg;
      try {
        lg = batch_loss_and_grad(batch, model, config.objective, &noise_rng);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::numeric && e.code() != ErrorCode::singular) throw;
        // Re-evaluate pair by pair to name the culprit.
        for (std::size_t i = start; i < end; ++i) {
          bool bad = false;
          try {
            const LabeledPair one[] = {dataset[order[i]]};
            bad = !std::isfinite(batch_loss(one, model, config.objective).total);
          } catch (const Error&) {
            bad = true;
          }
          if (bad) {
            fail(e.code(), "training aborted at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch_index) + ": dataset pair " + std::to_string(order[i]) +
                               " produced an invalid loss (" + e.what() + ")");
          }
        }
        fail(e.code(), "training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      for (const auto& g : lg.grads) g.check_finite("gradient");
      adam_step(model, lg.grads, adam, lr);

      const BatchRecord br{epoch, batch_index, lg.loss.loss_ms, lg.loss.loss_nl, lg.loss.total};
      if (hooks.loss_log) *hooks.loss_log << format_batch_record(br) << '\n';
      log.batches.push_back(br);
      const double w = static_cast<double>(end - start);
      er.loss_ms += w * br.loss_ms;
      er.loss_nl += w * br.loss_nl;
      er.total += w * br.total;
    }
    const double n = static_cast<double>(dataset.size());
    er.loss_ms /= n;
    er.loss_nl /= n;
    er.total /= n;
    log.epochs.push_back(er);
    if (hooks.loss_log) hooks.loss_log->flush();
    if (!hooks.checkpoint_path.empty()) flow::save_checkpoint(model, hooks.checkpoint_path);
    if (hooks.on_epoch) hooks.on_epoch(er);
  }
  return log;
}

}  // namespace cdflow::train
