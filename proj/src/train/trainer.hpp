// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flow/flow_model.hpp"
#include "train/losses.hpp"

namespace cdflow::train {

struct TrainConfig {
  int batch_size = 4;
  double lr_init = 1e-5;
  double lr_decay_factor = 2.0;
  int decay_every_epochs = 5;
  int epochs = 50;
  ObjectiveOptions objective;
  std::uint64_t seed = 0;

  /// Contract error unless batch_size >= 1, lr_init > 0, lambda >= 0,
  /// p in {1, 2}, decay factor > 0, decay period >= 1 and epochs >= 0.
  void validate() const;
};

/// lr_init / decay_factor^floor(epoch / decay_every_epochs).
double lr_at_epoch(const TrainConfig& config, int epoch);

struct BatchRecord {
  int epoch = 0;
  int batch = 0;
  double loss_ms = 0.0;
  double loss_nl = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss_ms = 0.0;
  double loss_nl = 0.0;
  double total = 0.0;
};

struct TrainLog {
  std::vector<BatchRecord> batches;
  std::vector<EpochRecord> epochs;
};

struct TrainHooks {
  /// Written after every epoch and at the end when non-empty.
  std::string checkpoint_path;
  /// Receives one "epoch,batch,loss_ms,loss_nl,total" line per batch.
  std::ostream* loss_log = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// The loss-log line for one batch, without trailing newline.
std::string format_batch_record(const BatchRecord& r);

/// Seeded mini-batch Adam training. Initializes actnorm from the first batch
/// when the model has not been initialized. Aborts with a numeric error that
/// names the dataset index of a pair producing a non-finite loss.
TrainLog train(flow::FlowModel& model, std::span<const LabeledPair> dataset, const TrainConfig& config,
               const TrainHooks& hooks = {});

}  // namespace cdflow::train
