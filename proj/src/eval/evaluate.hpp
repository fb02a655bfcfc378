// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "color/colorspace.hpp"
#include "eval/distort.hpp"
#include "eval/statistics.hpp"
#include "flow/flow_model.hpp"
#include "train/losses.hpp"

namespace cdflow::eval {

/// Predicted color difference of an image pair.
using PairMetric = std::function<double(const ad::Tensor&, const ad::Tensor&)>;

PairMetric flow_metric(const flow::FlowModel& model);
PairMetric pixel_mean_metric(color::Formula formula);

struct EvalOptions {
  /// Applied to image_b of every pair; labels are reused unchanged.
  std::optional<Distortion> distortion;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double stress = 0.0;
  double plcc = 0.0;
  double srcc = 0.0;
  LogisticParams fit{};
  std::size_t n = 0;
  bool fit_fallback = false;
  std::vector<double> predictions;
  std::vector<DistortParams> distortions;  // one per pair when distorted
};

/// Scores every pair and reports STRESS, linearized PLCC and SRCC against
/// delta_v. Needs at least 5 pairs. Pair i is distorted with a generator
/// seeded from (seed, i).
EvalReport evaluate(const PairMetric& metric, std::span<const train::LabeledPair> pairs,
                    const EvalOptions& options = {});

/// Statistics over precomputed predictions.
EvalReport report_from_predictions(std::vector<double> predictions, std::span<const double> labels);

std::uint64_t pair_seed(std::uint64_t seed, std::size_t index);

/// Aligned plain-text table; one row per named report.
std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows);
/// name=value lines with six decimals.
std::string format_report_kv(const EvalReport& report);

}  // namespace cdflow::eval
