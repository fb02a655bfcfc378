// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <vector>

#include "autodiff/tensor.hpp"

namespace cdflow::linalg {

/// LU factorization with partial pivoting of a square row-major matrix,
/// P A = L U with unit-diagonal L packed below U.
class LU {
 public:
  explicit LU(const ad::Tensor& matrix);

  std::size_t n() const { return n_; }
  double det() const;
  /// log|det| from the U diagonal; -inf if any pivot is exactly zero.
  double log_abs_det() const;
  /// Smallest |pivot|, a cheap singularity indicator.
  double min_abs_pivot() const;

  /// Solves A x = b in place for one right-hand side of length n.
  void solve_in_place(double* b) const;
  /// A^{-1} as an n x n tensor.
  ad::Tensor inverse() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> lu_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
};

ad::Tensor identity(std::size_t n);
ad::Tensor transpose(const ad::Tensor& matrix);
ad::Tensor matmul(const ad::Tensor& a, const ad::Tensor& b);

}  // namespace cdflow::linalg
