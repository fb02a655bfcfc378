// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

// Every op exists twice: a plain Tensor overload for inference and a Var
// overload that records itself on the tape. Layer code is written once as a
// template over the value type and picks the right overload.
//
// Broadcasting for binary ops is limited to the second operand:
//   - same shape as the first operand,
//   - a single value (scalar-vs-tensor),
//   - a rank-1 tensor whose length is the first operand's last extent
//     (per-channel-vs-spatial).

#include <cstddef>

#include "autodiff/tape.hpp"
#include "autodiff/tensor.hpp"

namespace cdflow::ad {

// Elementwise binary.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// Elementwise unary.
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
/// Domain error on negative input. The derivative at exactly 0 is taken as 0.
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor log_abs(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Var exp(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var square(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var log_abs(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

/// Sum of all elements, shape {1}.
Tensor sum(const Tensor& a);
Var sum(Var a);

/// Channel range [begin, end) of an H x W x C tensor.
Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Var slice_channels(Var a, std::size_t begin, std::size_t end);
Var concat_channels(Var a, Var b);

/// H x W x C -> H/2 x W/2 x 4C. Output channel q*C + c holds input channel c
/// of block position q in (top-left, top-right, bottom-left, bottom-right).
Tensor squeeze2x2(const Tensor& a);
Tensor unsqueeze2x2(const Tensor& a);
Var squeeze2x2(Var a);
Var unsqueeze2x2(Var a);

/// Same-padded 2-D convolution. input H x W x Cin, kernel k x k x Cin x Cout
/// (k odd), bias Cout.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);
Var conv2d(Var input, Var kernel, Var bias);

/// Left-multiplies every pixel's channel vector by the C x C matrix `w`.
Tensor channel_matmul(const Tensor& input, const Tensor& w);
Var channel_matmul(Var input, Var w);

/// log|det(w)| via LU with partial pivoting; gradient w^{-T}.
Tensor log_abs_det(const Tensor& w);
Var log_abs_det(Var w);

}  // namespace cdflow::ad
