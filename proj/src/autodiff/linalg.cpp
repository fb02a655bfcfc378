// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "autodiff/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "common/error.hpp"

namespace cdflow::linalg {

LU::LU(const ad::Tensor& matrix) {
  if (matrix.rank() != 2 || matrix.dim(0) != matrix.dim(1)) {
    fail(ErrorCode::dimension, "LU requires a square matrix, got " + ad::shape_str(matrix.shape()));
  }
  n_ = matrix.dim(0);
  lu_.assign(matrix.data().begin(), matrix.data().end());
  perm_.resize(n_);
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});

  for (std::size_t col = 0; col < n_; ++col) {
    std::size_t pivot = col;
    double best = std::abs(lu_[col * n_ + col]);
    for (std::size_t r = col + 1; r < n_; ++r) {
      const double v = std::abs(lu_[r * n_ + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < n_; ++c) std::swap(lu_[col * n_ + c], lu_[pivot * n_ + c]);
      std::swap(perm_[col], perm_[pivot]);
      sign_ = -sign_;
    }
    const double diag = lu_[col * n_ + col];
    if (diag == 0.0) continue;
    for (std::size_t r = col + 1; r < n_; ++r) {
      const double factor = lu_[r * n_ + col] / diag;
      lu_[r * n_ + col] = factor;
      if (factor == 0.0) continue;
      for (std::size_t c = col + 1; c < n_; ++c) lu_[r * n_ + c] -= factor * lu_[col * n_ + c];
    }
  }
}

double LU::det() const {
  double d = sign_;
  for (std::size_t i = 0; i < n_; ++i) d *= lu_[i * n_ + i];
  return d;
}

double LU::log_abs_det() const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    const double p = std::abs(lu_[i * n_ + i]);
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    s += std::log(p);
  }
  return s;
}

double LU::min_abs_pivot() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n_; ++i) m = std::min(m, std::abs(lu_[i * n_ + i]));
  return m;
}

void LU::solve_in_place(double* b) const {
  std::vector<double> y(n_);
  for (std::size_t i = 0; i < n_; ++i) y[i] = b[perm_[i]];
  for (std::size_t i = 0; i < n_; ++i) {
    double s = y[i];
    for (std::size_t j = 0; j < i; ++j) s -= lu_[i * n_ + j] * y[j];
    y[i] = s;
  }
  for (std::size_t ii = n_; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t j = ii + 1; j < n_; ++j) s -= lu_[ii * n_ + j] * y[j];
    y[ii] = s / lu_[ii * n_ + ii];
  }
  std::copy(y.begin(), y.end(), b);
}

ad::Tensor LU::inverse() const {
  ad::Tensor inv({n_, n_});
  std::vector<double> column(n_);
  for (std::size_t c = 0; c < n_; ++c) {
    std::fill(column.begin(), column.end(), 0.0);
    column[c] = 1.0;
    solve_in_place(column.data());
    for (std::size_t r = 0; r < n_; ++r) inv[r * n_ + c] = column[r];
  }
  return inv;
}

ad::Tensor identity(std::size_t n) {
  ad::Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
  return m;
}

ad::Tensor transpose(const ad::Tensor& matrix) {
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  ad::Tensor t({cols, rows});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = matrix[r * cols + c];
  return t;
}

ad::Tensor matmul(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail(ErrorCode::dimension,
         "matmul shape mismatch " + ad::shape_str(a.shape()) + " * " + ad::shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  ad::Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * b[p * m + j];
    }
  return out;
}

}  // namespace cdflow::linalg
