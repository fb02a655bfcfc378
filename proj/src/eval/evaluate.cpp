// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "eval/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "common/error.hpp"
#include "metric/cd_metric.hpp"

namespace cdflow::eval {

PairMetric flow_metric(const flow::FlowModel& model) {
  return [&model](const ad::Tensor& a, const ad::Tensor& b) { return metric::delta_e(a, b, model); };
}

PairMetric pixel_mean_metric(color::Formula formula) {
  return [formula](const ad::Tensor& a, const ad::Tensor& b) { return color::image_cd_mean(a, b, formula); };
}

std::uint64_t pair_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

EvalReport report_from_predictions(std::vector<double> predictions, std::span<const double> labels) {
  EvalReport r;
  r.n = predictions.size();
  r.stress = stress(predictions, labels);
  const PlccResult p = plcc_linearized(predictions, labels);
  r.plcc = p.plcc;
  r.fit = p.params;
  r.fit_fallback = p.fit_failed;
  r.srcc = srcc(predictions, labels);
  r.predictions = std::move(predictions);
  return r;
}

EvalReport evaluate(const PairMetric& metric, std::span<const train::LabeledPair> pairs, const EvalOptions& options) {
  if (pairs.size() < 5) {
    fail(ErrorCode::contract, "evaluation needs at least 5 pairs, got " + std::to_string(pairs.size()));
  }
  std::vector<double> predictions(pairs.size());
  std::vector<double> labels(pairs.size());
  std::vector<DistortParams> distortions;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const train::LabeledPair& pair = pairs[i];
    labels[i] = pair.delta_v;
    try {
      if (options.distortion) {
        const DistortedImage d = geometric_distort(pair.image_b, *options.distortion, pair_seed(options.seed, i));
        distortions.push_back(d.params);
        predictions[i] = metric(pair.image_a, d.image);
      } else {
        predictions[i] = metric(pair.image_a, pair.image_b);
      }
    } catch (const Error& e) {
      fail(e.code(), "metric failed on pair " + std::to_string(i) + ": " + e.what());
    }
    if (!std::isfinite(predictions[i])) {
      fail(ErrorCode::numeric, "metric returned a non-finite value on pair " + std::to_string(i));
    }
  }
  EvalReport r = report_from_predictions(std::move(predictions), labels);
  r.distortions = std::move(distortions);
  return r;
}

std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows) {
  std::size_t name_width = 6;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s  %10s  %10s  %10s  %6s\n", static_cast<int>(name_width), "metric", "STRESS",
                "PLCC", "SRCC", "n");
  out << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %10.6f  %10.6f  %10.6f  %6zu%s\n", static_cast<int>(name_width),
                  name.c_str(), r.stress, r.plcc, r.srcc, r.n, r.fit_fallback ? "  (raw PLCC)" : "");
    out << buf;
  }
  return out.str();
}

std::string format_report_kv(const EvalReport& r) {
  std::ostringstream out;
  char buf[128];
  auto line = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.6f\n", name, v);
    out << buf;
  };
  line("stress", r.stress);
  line("plcc", r.plcc);
  line("srcc", r.srcc);
  line("fit_b1", r.fit[0]);
  line("fit_b2", r.fit[1]);
  line("fit_b3", r.fit[2]);
  line("fit_b4", r.fit[3]);
  out << "n=" << r.n << "\n";
  out << "fit_fallback=" << (r.fit_fallback ? 1 : 0) << "\n";
  return out.str();
}

}  // namespace cdflow::eval
