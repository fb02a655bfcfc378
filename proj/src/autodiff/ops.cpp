// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "autodiff/ops.hpp"

#include <cmath>
#include <string>

#include "autodiff/linalg.hpp"
#include "common/error.hpp"

namespace cdflow::ad {

namespace {

enum class Broadcast { same, scalar, channel };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (shape_numel(b) == 1) return Broadcast::scalar;
  if (b.size() == 1 && a.size() >= 2 && b[0] == a.back()) return Broadcast::channel;
  fail(ErrorCode::dimension,
       std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
}

// Index into the broadcast operand for flat element i of the full operand.
inline std::size_t bidx(Broadcast kind, std::size_t i, std::size_t channels) {
  switch (kind) {
    case Broadcast::same: return i;
    case Broadcast::scalar: return 0;
    case Broadcast::channel: return i % channels;
  }
  return i;
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), op);
  const std::size_t channels = b.size();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[bidx(kind, i, channels)]);
  return out;
}

// Reduces a full-shape gradient onto the broadcast operand and accumulates.
void accumulate_broadcast(Tensor& target, const Tensor& full_grad, Broadcast kind, double sign) {
  const std::size_t channels = target.size();
  for (std::size_t i = 0; i < full_grad.size(); ++i) {
    target[bidx(kind, i, channels)] += sign * full_grad[i];
  }
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Records an elementwise unary op whose derivative is a function of (x, y).
template <class DF>
Var record_unary(Var a, Tensor value, DF dfdx) {
  return a.tape()->record(std::move(value), {a}, [dfdx](BackwardContext& ctx) {
    Tensor& ga = *ctx.input_grads[0];
    const Tensor& x = *ctx.inputs[0];
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += ctx.grad_output[i] * dfdx(x[i], ctx.output[i]);
    }
  });
}

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_rank3(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    fail(ErrorCode::dimension, std::string(op) + " expects H x W x C, got " + shape_str(t.shape()));
  }
}

void conv2d_check(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  require_rank3(input, "conv2d");
  if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
    fail(ErrorCode::dimension, "conv2d kernel must be k x k x Cin x Cout with odd k, got " +
                                   shape_str(kernel.shape()));
  }
  if (kernel.dim(2) != input.dim(2)) {
    fail(ErrorCode::dimension, "conv2d kernel input channels " + std::to_string(kernel.dim(2)) +
                                   " do not match input " + shape_str(input.shape()));
  }
  if (bias.size() != kernel.dim(3)) {
    fail(ErrorCode::dimension, "conv2d bias length " + std::to_string(bias.size()) +
                                   " does not match Cout " + std::to_string(kernel.dim(3)));
  }
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& gout, Tensor* gin,
                     Tensor* gk, Tensor* gb) {
  const std::size_t H = input.dim(0), W = input.dim(1), cin = input.dim(2);
  const std::size_t ks = kernel.dim(0), cout = kernel.dim(3);
  const long pad = static_cast<long>(ks / 2);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double* g = &gout[(y * W + x) * cout];
      if (gb) {
        for (std::size_t co = 0; co < cout; ++co) (*gb)[co] += g[co];
      }
      for (std::size_t dy = 0; dy < ks; ++dy) {
        const long iy = static_cast<long>(y + dy) - pad;
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t dx = 0; dx < ks; ++dx) {
          const long ix = static_cast<long>(x + dx) - pad;
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const std::size_t in_off = (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin;
          const std::size_t k_off = (dy * ks + dx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* krow = &kernel[k_off + ci * cout];
            if (gin) {
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) acc += g[co] * krow[co];
              (*gin)[in_off + ci] += acc;
            }
            if (gk) {
              const double v = input[in_off + ci];
              double* gkrow = &(*gk)[k_off + ci * cout];
              for (std::size_t co = 0; co < cout; ++co) gkrow[co] += v * g[co];
            }
          }
        }
      }
    }
  }
}

void channel_matmul_check(const Tensor& input, const Tensor& w) {
  require_rank3(input, "channel_matmul");
  const std::size_t c = input.dim(2);
  if (w.rank() != 2 || w.dim(0) != c || w.dim(1) != c) {
    fail(ErrorCode::dimension, "channel_matmul matrix " + shape_str(w.shape()) +
                                   " does not match " + std::to_string(c) + " channels");
  }
}

}  // namespace

// ---- binary -----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Var add(Var a, Var b) {
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), "add");
  return a.tape()->record(add(a.value(), b.value()), {a, b}, [kind](BackwardContext& ctx) {
    if (Tensor* ga = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_output[i];
    }
    if (Tensor* gb = ctx.input_grads[1]) accumulate_broadcast(*gb, ctx.grad_output, kind, 1.0);
  });
}

Var sub(Var a, Var b) {
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), "sub");
  return a.tape()->record(sub(a.value(), b.value()), {a, b}, [kind](BackwardContext& ctx) {
    if (Tensor* ga = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_output[i];
    }
    if (Tensor* gb = ctx.input_grads[1]) accumulate_broadcast(*gb, ctx.grad_output, kind, -1.0);
  });
}

Var mul(Var a, Var b) {
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), "mul");
  return a.tape()->record(mul(a.value(), b.value()), {a, b}, [kind](BackwardContext& ctx) {
    const Tensor& av = *ctx.inputs[0];
    const Tensor& bv = *ctx.inputs[1];
    const std::size_t channels = bv.size();
    if (Tensor* ga = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < ga->size(); ++i) {
        (*ga)[i] += ctx.grad_output[i] * bv[bidx(kind, i, channels)];
      }
    }
    if (Tensor* gb = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < av.size(); ++i) {
        (*gb)[bidx(kind, i, channels)] += ctx.grad_output[i] * av[i];
      }
    }
  });
}

// ---- unary ------------------------------------------------------------------

Tensor exp(const Tensor& a) { return unary(a, [](double x) { return std::exp(x); }); }
Tensor tanh(const Tensor& a) { return unary(a, [](double x) { return std::tanh(x); }); }
Tensor softplus(const Tensor& a) { return unary(a, softplus_scalar); }
Tensor square(const Tensor& a) { return unary(a, [](double x) { return x * x; }); }
Tensor abs(const Tensor& a) { return unary(a, [](double x) { return std::abs(x); }); }
Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; });
}
Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) fail(ErrorCode::domain, "sqrt of negative value " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::sqrt(x); });
}

Tensor log_abs(const Tensor& a) {
  for (double v : a.data()) {
    if (v == 0.0) fail(ErrorCode::singular, "log|x| at x = 0");
  }
  return unary(a, [](double x) { return std::log(std::abs(x)); });
}

Var exp(Var a) {
  return record_unary(a, exp(a.value()), [](double, double y) { return y; });
}
Var tanh(Var a) {
  return record_unary(a, tanh(a.value()), [](double, double y) { return 1.0 - y * y; });
}
Var softplus(Var a) {
  return record_unary(a, softplus(a.value()), [](double x, double) { return sigmoid(x); });
}
Var square(Var a) {
  return record_unary(a, square(a.value()), [](double x, double) { return 2.0 * x; });
}
Var sqrt(Var a) {
  return record_unary(a, sqrt(a.value()),
                      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}
Var abs(Var a) {
  return record_unary(a, abs(a.value()), [](double x, double) {
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  });
}
Var log_abs(Var a) {
  return record_unary(a, log_abs(a.value()), [](double x, double) { return 1.0 / x; });
}
Var scale(Var a, double factor) {
  return record_unary(a, scale(a.value(), factor), [factor](double, double) { return factor; });
}
Var add_scalar(Var a, double offset) {
  return record_unary(a, add_scalar(a.value(), offset), [](double, double) { return 1.0; });
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s);
}

Var sum(Var a) {
  return a.tape()->record(sum(a.value()), {a}, [](BackwardContext& ctx) {
    Tensor& ga = *ctx.input_grads[0];
    const double g = ctx.grad_output[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

// ---- channel structure ------------------------------------------------------

Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank3(a, "slice_channels");
  const std::size_t c = a.dim(2);
  if (begin >= end || end > c) {
    fail(ErrorCode::dimension, "channel slice [" + std::to_string(begin) + ", " +
                                   std::to_string(end) + ") out of range for " + shape_str(a.shape()));
  }
  const std::size_t pixels = a.dim(0) * a.dim(1), width = end - begin;
  Tensor out({a.dim(0), a.dim(1), width});
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t k = 0; k < width; ++k) out[p * width + k] = a[p * c + begin + k];
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank3(a, "concat_channels");
  require_rank3(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    fail(ErrorCode::dimension,
         "concat_channels spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t ca = a.dim(2), cb = b.dim(2), c = ca + cb, pixels = a.dim(0) * a.dim(1);
  Tensor out({a.dim(0), a.dim(1), c});
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t k = 0; k < ca; ++k) out[p * c + k] = a[p * ca + k];
    for (std::size_t k = 0; k < cb; ++k) out[p * c + ca + k] = b[p * cb + k];
  }
  return out;
}

Var slice_channels(Var a, std::size_t begin, std::size_t end) {
  return a.tape()->record(slice_channels(a.value(), begin, end), {a}, [begin](BackwardContext& ctx) {
    Tensor& ga = *ctx.input_grads[0];
    const std::size_t c = ga.dim(2), width = ctx.grad_output.dim(2);
    const std::size_t pixels = ga.dim(0) * ga.dim(1);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t k = 0; k < width; ++k) ga[p * c + begin + k] += ctx.grad_output[p * width + k];
  });
}

Var concat_channels(Var a, Var b) {
  return a.tape()->record(concat_channels(a.value(), b.value()), {a, b}, [](BackwardContext& ctx) {
    const std::size_t ca = ctx.inputs[0]->dim(2), cb = ctx.inputs[1]->dim(2), c = ca + cb;
    const std::size_t pixels = ctx.inputs[0]->dim(0) * ctx.inputs[0]->dim(1);
    for (std::size_t p = 0; p < pixels; ++p) {
      if (Tensor* ga = ctx.input_grads[0])
        for (std::size_t k = 0; k < ca; ++k) (*ga)[p * ca + k] += ctx.grad_output[p * c + k];
      if (Tensor* gb = ctx.input_grads[1])
        for (std::size_t k = 0; k < cb; ++k) (*gb)[p * cb + k] += ctx.grad_output[p * c + ca + k];
    }
  });
}

Tensor squeeze2x2(const Tensor& a) {
  require_rank3(a, "squeeze");
  const std::size_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
  if (H % 2 != 0 || W % 2 != 0) {
    fail(ErrorCode::dimension, "squeeze needs even spatial extents, got " + shape_str(a.shape()));
  }
  const std::size_t h = H / 2, w = W / 2, c4 = 4 * C;
  Tensor out({h, w, c4});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t sy = 2 * y + q / 2, sx = 2 * x + q % 2;
        for (std::size_t c = 0; c < C; ++c) out[(y * w + x) * c4 + q * C + c] = a[(sy * W + sx) * C + c];
      }
  return out;
}

Tensor unsqueeze2x2(const Tensor& a) {
  require_rank3(a, "unsqueeze");
  const std::size_t h = a.dim(0), w = a.dim(1), c4 = a.dim(2);
  if (c4 % 4 != 0) {
    fail(ErrorCode::dimension, "unsqueeze needs a multiple of 4 channels, got " + shape_str(a.shape()));
  }
  const std::size_t C = c4 / 4, W = 2 * w;
  Tensor out({2 * h, W, C});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t sy = 2 * y + q / 2, sx = 2 * x + q % 2;
        for (std::size_t c = 0; c < C; ++c) out[(sy * W + sx) * C + c] = a[(y * w + x) * c4 + q * C + c];
      }
  return out;
}

Var squeeze2x2(Var a) {
  return a.tape()->record(squeeze2x2(a.value()), {a}, [](BackwardContext& ctx) {
    const Tensor g = unsqueeze2x2(ctx.grad_output);
    Tensor& ga = *ctx.input_grads[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Var unsqueeze2x2(Var a) {
  return a.tape()->record(unsqueeze2x2(a.value()), {a}, [](BackwardContext& ctx) {
    const Tensor g = squeeze2x2(ctx.grad_output);
    Tensor& ga = *ctx.input_grads[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

// ---- linear -----------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  conv2d_check(input, kernel, bias);
  const std::size_t H = input.dim(0), W = input.dim(1), cin = input.dim(2);
  const std::size_t ks = kernel.dim(0), cout = kernel.dim(3);
  const long pad = static_cast<long>(ks / 2);
  Tensor out({H, W, cout});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double* o = &out[(y * W + x) * cout];
      for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
      for (std::size_t dy = 0; dy < ks; ++dy) {
        const long iy = static_cast<long>(y + dy) - pad;
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t dx = 0; dx < ks; ++dx) {
          const long ix = static_cast<long>(x + dx) - pad;
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const double* in = &input[(static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin];
          const double* k = &kernel[(dy * ks + dx) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = in[ci];
            const double* krow = k + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += v * krow[co];
          }
        }
      }
    }
  }
  return out;
}

Var conv2d(Var input, Var kernel, Var bias) {
  return input.tape()->record(conv2d(input.value(), kernel.value(), bias.value()), {input, kernel, bias},
                              [](BackwardContext& ctx) {
                                conv2d_backward(*ctx.inputs[0], *ctx.inputs[1], ctx.grad_output,
                                                ctx.input_grads[0], ctx.input_grads[1],
                                                ctx.input_grads[2]);
                              });
}

Tensor channel_matmul(const Tensor& input, const Tensor& w) {
  channel_matmul_check(input, w);
  const std::size_t c = input.dim(2), pixels = input.dim(0) * input.dim(1);
  Tensor out(input.shape());
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* in = &input[p * c];
    double* o = &out[p * c];
    for (std::size_t i = 0; i < c; ++i) {
      double acc = 0.0;
      const double* row = &w[i * c];
      for (std::size_t j = 0; j < c; ++j) acc += row[j] * in[j];
      o[i] = acc;
    }
  }
  return out;
}

Var channel_matmul(Var input, Var w) {
  return input.tape()->record(channel_matmul(input.value(), w.value()), {input, w}, [](BackwardContext& ctx) {
    const Tensor& in = *ctx.inputs[0];
    const Tensor& wv = *ctx.inputs[1];
    const std::size_t c = in.dim(2), pixels = in.dim(0) * in.dim(1);
    Tensor* gin = ctx.input_grads[0];
    Tensor* gw = ctx.input_grads[1];
    for (std::size_t p = 0; p < pixels; ++p) {
      const double* g = &ctx.grad_output[p * c];
      const double* x = &in[p * c];
      for (std::size_t i = 0; i < c; ++i) {
        const double gi = g[i];
        if (gin) {
          for (std::size_t j = 0; j < c; ++j) (*gin)[p * c + j] += wv[i * c + j] * gi;
        }
        if (gw) {
          for (std::size_t j = 0; j < c; ++j) (*gw)[i * c + j] += gi * x[j];
        }
      }
    }
  });
}

Tensor log_abs_det(const Tensor& w) {
  const linalg::LU lu(w);
  return Tensor::scalar(lu.log_abs_det());
}

Var log_abs_det(Var w) {
  const linalg::LU lu(w.value());
  return w.tape()->record(Tensor::scalar(lu.log_abs_det()), {w}, [](BackwardContext& ctx) {
    const Tensor inv_t = linalg::transpose(linalg::LU(*ctx.inputs[0]).inverse());
    Tensor& gw = *ctx.input_grads[0];
    const double g = ctx.grad_output[0];
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += g * inv_t[i];
  });
}

}  // namespace cdflow::ad
