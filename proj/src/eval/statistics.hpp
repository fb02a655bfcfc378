// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace cdflow::eval {

/// Standardized residual sum of squares between predictions E and labels V,
///   100 * sqrt( sum (E - F V)^2 / (F^2 sum V^2) ),  F = sum E^2 / sum E V.
/// Degenerate error if sum E V == 0.
double stress(std::span<const double> e, std::span<const double> v);

/// Pearson correlation; degenerate error on zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman correlation (Pearson of average ranks). Needs n >= 3.
double srcc(std::span<const double> e, std::span<const double> v);

/// Parameters (b1, b2, b3, b4) of
///   f(e) = (b1 - b2) / (1 + exp(-(e - b3) / |b4|)) + b2.
using LogisticParams = std::array<double, 4>;

double logistic4(const LogisticParams& b, double e);

struct PlccResult {
  double plcc = 0.0;
  LogisticParams params{};
  /// True when every fit start failed and plcc is the raw Pearson value.
  bool fit_failed = false;
};

/// Least-squares logistic fit of V on E followed by Pearson(f(E), V). Needs
/// n >= 5.
PlccResult plcc_linearized(std::span<const double> e, std::span<const double> v);

/// Unconstrained Nelder-Mead minimization.
struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                             std::vector<double> step, int max_iterations = 20000, double tolerance = 1e-15);

}  // namespace cdflow::eval
