// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "eval/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "common/error.hpp"

namespace cdflow::eval {

namespace {

void require_lengths(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
  if (a.size() != b.size()) {
    fail(ErrorCode::dimension, std::string(what) + ": prediction and label counts differ (" +
                                   std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < min_n) {
    fail(ErrorCode::contract, std::string(what) + " needs at least " + std::to_string(min_n) + " samples, got " +
                                  std::to_string(a.size()));
  }
}

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Value at quantile q of a sorted copy (linear interpolation).
double quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace

double stress(std::span<const double> e, std::span<const double> v) {
  require_lengths(e, v, 2, "STRESS");
  double ee = 0.0, ev = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    ee += e[i] * e[i];
    ev += e[i] * v[i];
    vv += v[i] * v[i];
  }
  if (vv == 0.0) fail(ErrorCode::degenerate, "STRESS undefined: all labels are zero");
  if (ev == 0.0) fail(ErrorCode::degenerate, "STRESS undefined: sum of E*V is zero");
  const double F = ee / ev;
  double resid = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double r = e[i] - F * v[i];
    resid += r * r;
  }
  return 100.0 * std::sqrt(resid / (F * F * vv));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_lengths(a, b, 2, "Pearson correlation");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) fail(ErrorCode::degenerate, "correlation undefined: zero variance");
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start + 1;
    while (end < idx.size() && x[idx[end]] == x[idx[start]]) ++end;
    // Positions start..end-1 share the mean of ranks start+1..end.
    const double r = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[idx[k]] = r;
    start = end;
  }
  return ranks;
}

double srcc(std::span<const double> e, std::span<const double> v) {
  require_lengths(e, v, 3, "SRCC");
  const auto re = average_ranks(e);
  const auto rv = average_ranks(v);
  return pearson(re, rv);
}

double logistic4(const LogisticParams& b, double e) {
  return (b[0] - b[1]) / (1.0 + std::exp(-(e - b[2]) / std::abs(b[3]))) + b[1];
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                             std::vector<double> step, int max_iterations, double tolerance) {
  const std::size_t n = start.size();
  std::vector<std::vector<double>> simplex(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step[i];
  auto eval = [&](const std::vector<double>& x) {
    const double y = f(x);
    return std::isfinite(y) ? y : std::numeric_limits<double>::infinity();
  };
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  NelderMeadResult result;
  std::vector<std::size_t> order(n + 1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter + 1;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t d = 0; d < n; ++d) diameter = std::max(diameter, std::abs(simplex[i][d] - simplex[best][d]));
    if (values[worst] - values[best] <= tolerance * (std::abs(values[best]) + 1e-300) && diameter < 1e-10) {
      result.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
    }
    auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t d = 0; d < n; ++d) p[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
      return p;
    };

    const auto reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < values[best]) {
      const auto expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const auto contracted = along(outside ? -0.5 : 0.5);
    const double fc = eval(contracted);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t d = 0; d < n; ++d) simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
      values[i] = eval(simplex[i]);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  result.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  result.value = *best_it;
  return result;
}

PlccResult plcc_linearized(std::span<const double> e, std::span<const double> v) {
  require_lengths(e, v, 5, "PLCC");
  const double me = mean(e), mv = mean(v);
  const double se = stddev(e, me), sv = stddev(v, mv);
  if (sv == 0.0) fail(ErrorCode::degenerate, "PLCC undefined: labels are constant");
  if (se == 0.0) fail(ErrorCode::degenerate, "PLCC undefined: predictions are constant");

  // The fit runs on standardized data so it is invariant to affine rescaling
  // of either input; parameters are mapped back afterwards.
  std::vector<double> ze(e.size()), zv(v.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    ze[i] = (e[i] - me) / se;
    zv[i] = (v[i] - mv) / sv;
  }
  auto sse = [&](std::span<const double> b) {
    const LogisticParams p{b[0], b[1], b[2], b[3]};
    if (p[3] == 0.0) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (std::size_t i = 0; i < ze.size(); ++i) {
      const double r = logistic4(p, ze[i]) - zv[i];
      s += r * r;
    }
    return s;
  };

  const double vmax = *std::max_element(zv.begin(), zv.end());
  const double vmin = *std::min_element(zv.begin(), zv.end());
  const double raw = pearson(ze, zv);
  std::vector<std::vector<double>> starts;
  for (double q : {0.25, 0.5, 0.75}) {
    const double center = quantile(ze, q);
    for (double width : {0.3, 1.0, 3.0}) {
      starts.push_back({vmax, vmin, center, width});
      starts.push_back({vmin, vmax, center, width});
    }
  }
  // Nearly linear regime: slope (b1 - b2) / (4 b4) matches the least-squares line.
  starts.push_back({20.0 * raw, -20.0 * raw, 0.0, 10.0});

  NelderMeadResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    std::vector<double> step{0.1 * (std::abs(s[0]) + 0.1), 0.1 * (std::abs(s[1]) + 0.1), 0.25, 0.25 * std::abs(s[3])};
    auto r = nelder_mead(sse, s, step);
    // One restart from the optimum to escape a collapsed simplex.
    auto again = nelder_mead(sse, r.x, step);
    if (again.value <= r.value) r = again;
    if (r.value < best.value) best = r;
  }

  PlccResult out;
  if (!std::isfinite(best.value)) {
    out.plcc = pearson(e, v);
    out.fit_failed = true;
    return out;
  }
  const LogisticParams zp{best.x[0], best.x[1], best.x[2], best.x[3]};
  std::vector<double> fitted(ze.size());
  for (std::size_t i = 0; i < ze.size(); ++i) fitted[i] = logistic4(zp, ze[i]);
  const double fmin = *std::min_element(fitted.begin(), fitted.end());
  const double fmax = *std::max_element(fitted.begin(), fitted.end());
  if (!(fmax > fmin)) {
    out.plcc = pearson(e, v);
    out.fit_failed = true;
    return out;
  }
  out.plcc = pearson(fitted, zv);
  out.params = {sv * zp[0] + mv, sv * zp[1] + mv, me + se * zp[2], se * std::abs(zp[3])};
  return out;
}

}  // namespace cdflow::eval
