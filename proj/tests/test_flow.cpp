// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "autodiff/linalg.hpp"
#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "flow/checkpoint.hpp"
#include "flow/flow.hpp"
#include "flow/flow_model.hpp"
#include "jacobian.hpp"
#include "support.hpp"

using namespace cdflow;
using namespace cdflow::flow;
using testing::numerical_jacobian;
using ad::Tensor;
using testing::random_image;
using testing::random_tensor;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

FlowConfig small_config(int k, int l, std::size_t size, int hidden = 8) {
  FlowConfig c;
  c.scales = k;
  c.steps = l;
  c.hidden_width = hidden;
  c.height = size;
  c.width = size;
  return c;
}

std::vector<double> sorted_values(const Tensor& t) {
  std::vector<double> v(t.values());
  std::sort(v.begin(), v.end());
  return v;
}

// ---- independent density oracle: plain loops, no library layer code ----

struct Grid {
  std::size_t h, w, c;
  std::vector<double> v;
  double& at(std::size_t y, std::size_t x, std::size_t ch) { return v[(y * w + x) * c + ch]; }
  double at(std::size_t y, std::size_t x, std::size_t ch) const { return v[(y * w + x) * c + ch]; }
};

Grid from_tensor(const Tensor& t) { return {t.dim(0), t.dim(1), t.dim(2), t.values()}; }

Grid oracle_squeeze(const Grid& g) {
  Grid out{g.h / 2, g.w / 2, g.c * 4, std::vector<double>(g.v.size())};
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x)
      for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t ch = 0; ch < g.c; ++ch) out.at(y, x, q * g.c + ch) = g.at(2 * y + q / 2, 2 * x + q % 2, ch);
  return out;
}

Grid oracle_conv(const Grid& in, const Tensor& k, const Tensor& b) {
  const std::size_t ks = k.dim(0), cout = k.dim(3);
  Grid out{in.h, in.w, cout, std::vector<double>(in.h * in.w * cout)};
  for (std::size_t y = 0; y < in.h; ++y)
    for (std::size_t x = 0; x < in.w; ++x)
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = b[co];
        for (std::size_t dy = 0; dy < ks; ++dy)
          for (std::size_t dx = 0; dx < ks; ++dx) {
            const long iy = static_cast<long>(y + dy) - 1, ix = static_cast<long>(x + dx) - 1;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) || ix >= static_cast<long>(in.w)) continue;
            for (std::size_t ci = 0; ci < in.c; ++ci)
              acc += in.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) *
                     k[((dy * ks + dx) * in.c + ci) * cout + co];
          }
        out.at(y, x, co) = acc;
      }
  return out;
}

double oracle_log_likelihood(const FlowModel& model, const Tensor& x) {
  const FlowConfig& cfg = model.config();
  const auto& layout = model.layout();
  Grid h = from_tensor(x);
  double log_det = 0.0, log_p = 0.0;
  auto gauss = [](double z, double mu, double log_sigma) {
    const double u = (z - mu) / std::exp(log_sigma);
    return -0.5 * u * u - log_sigma - 0.5 * kLog2Pi;
  };
  for (int k = 1; k <= cfg.scales; ++k) {
    const auto& scale = layout.scales[static_cast<std::size_t>(k - 1)];
    h = oracle_squeeze(h);
    const std::size_t c = h.c, half = c / 2, pixels = h.h * h.w;
    for (const auto& st : scale.steps) {
      const Tensor& s = model.param(st.actnorm_scale);
      const Tensor& t = model.param(st.actnorm_bias);
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) h.v[p * c + ch] = s[ch] * h.v[p * c + ch] + t[ch];
      for (std::size_t ch = 0; ch < c; ++ch) log_det += static_cast<double>(pixels) * std::log(std::abs(s[ch]));

      const Tensor& w = model.param(st.mix);
      std::vector<double> tmp(c);
      for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t i = 0; i < c; ++i) {
          tmp[i] = 0.0;
          for (std::size_t j = 0; j < c; ++j) tmp[i] += w[i * c + j] * h.v[p * c + j];
        }
        std::copy(tmp.begin(), tmp.end(), h.v.begin() + static_cast<long>(p * c));
      }
      log_det += static_cast<double>(pixels) * std::log(std::abs(testing::to_eigen(w).determinant()));

      Grid cond{h.h, h.w, half, std::vector<double>(pixels * half)};
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < half; ++ch) cond.v[p * half + ch] = h.v[p * c + ch];
      Grid hidden = oracle_conv(cond, model.param(st.conv1_kernel), model.param(st.conv1_bias));
      for (double& v : hidden.v) v = std::log1p(std::exp(v));
      const Grid raw = oracle_conv(hidden, model.param(st.conv2_kernel), model.param(st.conv2_bias));
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < half; ++ch) {
          const double ls = cfg.clamp * std::tanh(raw.v[p * c + ch] / cfg.clamp);
          const double sh = raw.v[p * c + half + ch];
          h.v[p * c + half + ch] = h.v[p * c + half + ch] * std::exp(ls) + sh;
          log_det += ls;
        }
    }
    if (k < cfg.scales) {
      Grid carry{h.h, h.w, half, std::vector<double>(pixels * half)};
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < half; ++ch) carry.v[p * half + ch] = h.v[p * c + half + ch];
      const Grid prior = oracle_conv(carry, model.param(scale.prior_kernel), model.param(scale.prior_bias));
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < half; ++ch)
          log_p += gauss(h.v[p * c + ch], prior.v[p * c + ch], prior.v[p * c + half + ch]);
      h = carry;
    } else {
      const Tensor& mu = model.param(layout.top_mean);
      const Tensor& ls = model.param(layout.top_log_scale);
      for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) log_p += gauss(h.v[p * c + ch], mu[ch], ls[ch]);
    }
  }
  return log_p + log_det;
}

}  // namespace

TEST_CASE("FlowConfig validation") {
  CHECK_NOTHROW(small_config(2, 1, 4).validate());
  CHECK_THROWS_AS(small_config(1, 1, 4).validate(), Error);
  CHECK_THROWS_AS(small_config(2, 0, 4).validate(), Error);
  FlowConfig bad = small_config(3, 1, 8);
  bad.width = 12;
  try {
    bad.validate();
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension);
  }
  CHECK(small_config(3, 2, 32).channels(1) == 12);
  CHECK(small_config(3, 2, 32).channels(3) == 48);
}

TEST_CASE("squeeze block order and inverse") {
  Tensor x({2, 2, 1}, {1, 2, 3, 4});
  const Tensor s = squeeze(x);
  CHECK(s.shape() == ad::Shape{1, 1, 4});
  CHECK(s.values() == std::vector<double>{1, 2, 3, 4});

  std::mt19937_64 rng(1);
  const Tensor r = random_tensor({8, 6, 5}, rng);
  CHECK(squeeze(r).shape() == ad::Shape{4, 3, 20});
  CHECK(unsqueeze(squeeze(r)) == r);
  CHECK_THROWS_AS(squeeze(random_tensor({3, 4, 1}, rng)), Error);
}

TEST_CASE("actnorm") {
  std::mt19937_64 rng(2);
  const Tensor z = random_tensor({4, 4, 3}, rng);
  auto id = actnorm(z, Tensor({3}, 1.0), Tensor({3}, 0.0), Direction::forward);
  CHECK(id.value == z);
  CHECK(id.log_det.item() == 0.0);

  auto doubled = actnorm(random_tensor({4, 4, 1}, rng), Tensor({1}, 2.0), Tensor({1}, 0.0), Direction::forward);
  CHECK(doubled.log_det.item() == doctest::Approx(16.0 * std::log(2.0)).epsilon(1e-14));

  const Tensor s = random_tensor({3}, rng, 0.5, 2.0), t = random_tensor({3}, rng);
  auto fwd = actnorm(z, s, t, Direction::forward);
  auto inv = actnorm(fwd.value, s, t, Direction::inverse);
  CHECK(ad::max_abs_diff(inv.value, z) <= 1e-10);
  CHECK(inv.log_det.item() == doctest::Approx(-fwd.log_det.item()));

  Tensor zero_s({3}, 1.0);
  zero_s[1] = 0.0;
  try {
    actnorm(z, zero_s, t, Direction::forward);
    FAIL("expected singular error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::singular);
  }
}

TEST_CASE("actnorm data-dependent initialization") {
  std::mt19937_64 rng(3);
  std::vector<Tensor> batch;
  for (int i = 0; i < 4; ++i) {
    Tensor t = random_tensor({4, 4, 3}, rng, -1.0, 1.0);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = 3.0 * t[j] + 2.0 * static_cast<double>(j % 3);
    batch.push_back(t);
  }
  auto [s, t] = actnorm_init(batch);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const Tensor& b : batch)
      for (std::size_t i = ch; i < b.size(); i += 3) {
        const double v = s[ch] * b[i] + t[ch];
        sum += v;
        sq += v * v;
        n += 1.0;
      }
    const double mean = sum / n;
    CHECK(std::abs(mean) <= 1e-8);
    CHECK(std::abs(sq / n - mean * mean - 1.0) <= 1e-6);
  }

  std::vector<Tensor> constant{Tensor({2, 2, 2}, 5.0), Tensor({2, 2, 2}, 5.0)};
  auto [sc, tc] = actnorm_init(constant);
  CHECK(sc[0] == 1.0);
  CHECK(tc[0] == -5.0);

  // Standardizing an already standardized batch is close to the identity.
  std::vector<Tensor> standardized;
  for (const Tensor& b : batch) standardized.push_back(actnorm(b, s, t, Direction::forward).value);
  auto [s2, t2] = actnorm_init(standardized);
  CHECK(s2[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(t2[0]) <= 1e-9);
}

TEST_CASE("invertible 1x1 convolution") {
  std::mt19937_64 rng(4);
  const Tensor z = random_tensor({2, 2, 12}, rng);
  auto id = inv_conv(z, linalg::identity(12), Direction::forward);
  CHECK(id.value == z);
  CHECK(id.log_det.item() == 0.0);

  auto orth = inv_conv(z, random_orthogonal(12, 7), Direction::forward);
  CHECK(std::abs(orth.log_det.item()) <= 1e-12);

  Tensor w = random_tensor({12, 12}, rng);
  for (std::size_t i = 0; i < 12; ++i) w[i * 12 + i] += 4.0;
  auto fwd = inv_conv(z, w, Direction::forward);
  const double oracle = 4.0 * std::log(std::abs(testing::to_eigen(w).determinant()));
  CHECK(std::abs(fwd.log_det.item() - oracle) <= 1e-8);
  auto inv = inv_conv(fwd.value, w, Direction::inverse);
  CHECK(ad::max_abs_diff(inv.value, z) <= 1e-8);

  Tensor singular({12, 12}, 0.0);
  for (std::size_t i = 0; i < 11; ++i) singular[i * 12 + i] = 1.0;
  try {
    inv_conv(z, singular, Direction::forward);
    FAIL("expected singular error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::singular);
  }
}

TEST_CASE("affine coupling") {
  std::mt19937_64 rng(5);
  const Tensor z = random_tensor({2, 2, 4}, rng);
  const Tensor zero_k1({3, 3, 2, 6}, 0.0), zero_b1({6}, 0.0), zero_k2({3, 3, 6, 4}, 0.0), zero_b2({4}, 0.0);
  auto id = affine_coupling(z, {zero_k1, zero_b1, zero_k2, zero_b2}, 2.0, Direction::forward);
  CHECK(id.value == z);
  CHECK(id.log_det.item() == 0.0);

  for (int trial = 0; trial < 5; ++trial) {
    const Tensor k1 = random_tensor({3, 3, 2, 6}, rng, -0.5, 0.5), b1 = random_tensor({6}, rng);
    const Tensor k2 = random_tensor({3, 3, 6, 4}, rng, -0.5, 0.5), b2 = random_tensor({4}, rng);
    const CouplingNet net{k1, b1, k2, b2};
    auto fwd = affine_coupling(z, net, 2.0, Direction::forward);
    auto inv = affine_coupling(fwd.value, net, 2.0, Direction::inverse);
    CHECK(ad::max_abs_diff(inv.value, z) <= 1e-8);

    const auto jac = numerical_jacobian(
        [&](const Tensor& in) { return affine_coupling(in, net, 2.0, Direction::forward).value; }, z, 1e-6);
    CHECK(std::abs(std::log(std::abs(jac.determinant())) - fwd.log_det.item()) <= 1e-6);
  }
  CHECK_THROWS_AS(affine_coupling(random_tensor({2, 2, 3}, rng), {zero_k1, zero_b1, zero_k2, zero_b2}, 2.0,
                                  Direction::forward),
                  Error);
}

TEST_CASE("split") {
  std::mt19937_64 rng(6);
  const Tensor z = random_tensor({8, 8, 12}, rng);
  const Tensor k({3, 3, 6, 12}, 0.0), b({12}, 0.0);
  const auto r = split(z, k, b);
  CHECK(r.latent.shape() == ad::Shape{8, 8, 6});
  CHECK(r.carry.shape() == ad::Shape{8, 8, 6});
  CHECK(ad::concat_channels(r.latent, r.carry) == z);
  CHECK(r.mean == Tensor({8, 8, 6}, 0.0));
  CHECK(r.log_scale == Tensor({8, 8, 6}, 0.0));
  CHECK_THROWS_AS(split(random_tensor({2, 2, 3}, rng), k, b), Error);
}

TEST_CASE("identity-initialized flow permutes its input") {
  const FlowConfig cfg = small_config(3, 2, 16);
  const FlowModel model(cfg, 11, FlowInit::identity);
  std::mt19937_64 rng(7);
  const Tensor x = random_image(16, 16, rng);
  const auto latents = flow_forward(model, x);
  CHECK(latents.log_det.item() == 0.0);
  const Tensor flat = flatten_latents(latents.parts);
  CHECK(flat.size() == x.size());
  CHECK(sorted_values(flat) == sorted_values(x));

  const double d = static_cast<double>(x.size());
  double sq = 0.0;
  for (double v : x.values()) sq += v * v;
  CHECK(log_likelihood(model, x) == doctest::Approx(-0.5 * d * kLog2Pi - 0.5 * sq).epsilon(1e-12));
  CHECK(log_likelihood(model, Tensor({16, 16, 3}, 0.0)) == doctest::Approx(-0.5 * d * kLog2Pi).epsilon(1e-14));
  CHECK(flow_inverse(model, latents) == x);
}

TEST_CASE("latent shapes follow the squeeze/split schedule") {
  const FlowConfig cfg = small_config(3, 1, 32);
  const FlowModel model(cfg, 1);
  std::mt19937_64 rng(8);
  const auto latents = flow_forward(model, random_image(32, 32, rng));
  REQUIRE(latents.parts.size() == 3);
  CHECK(latents.parts[0].shape() == ad::Shape{16, 16, 6});
  CHECK(latents.parts[1].shape() == ad::Shape{8, 8, 12});
  CHECK(latents.parts[2].shape() == ad::Shape{4, 4, 48});
  std::size_t total = 0;
  for (const auto& p : latents.parts) total += p.size();
  CHECK(total == 32 * 32 * 3);
}

TEST_CASE("random flows are invertible") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    FlowModel model(small_config(3, 2, 16), static_cast<std::uint64_t>(trial));
    testing::randomize(model, 100 + static_cast<std::uint64_t>(trial));
    const Tensor x = random_image(16, 16, rng);
    CHECK(ad::max_abs_diff(flow_inverse(model, flow_forward(model, x)), x) <= 1e-6);
  }
}

TEST_CASE("flow log-determinant matches the numerical Jacobian") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 3; ++trial) {
    FlowModel model(small_config(2, 1, 4), static_cast<std::uint64_t>(trial));
    testing::randomize(model, 200 + static_cast<std::uint64_t>(trial));
    const Tensor x = random_image(4, 4, rng);
    const auto jac = numerical_jacobian(
        [&](const Tensor& in) { return flatten_latents(flow_forward(model, in).parts); }, x, 1e-6);
    CHECK(std::abs(std::log(std::abs(jac.determinant())) - flow_forward(model, x).log_det.item()) <= 1e-3);
  }
}

TEST_CASE("log-likelihood matches an independent density evaluation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    FlowModel model(small_config(2, 2, 8), static_cast<std::uint64_t>(trial));
    testing::randomize(model, 300 + static_cast<std::uint64_t>(trial));
    const Tensor x = random_image(8, 8, rng);
    const double expected = oracle_log_likelihood(model, x);
    CHECK(log_likelihood(model, x) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("taped forward agrees with the plain forward") {
  FlowModel model(small_config(2, 1, 8), 3);
  testing::randomize(model, 4);
  std::mt19937_64 rng(12);
  const Tensor x = random_image(8, 8, rng);
  ad::Tape tape;
  const auto params = register_parameters(tape, model);
  const auto taped = flow_forward(model, params, tape.constant(x));
  const auto plain = flow_forward(model, x);
  for (std::size_t i = 0; i < plain.parts.size(); ++i) CHECK(taped.parts[i].value() == plain.parts[i]);
  CHECK(log_likelihood(taped).value().item() == doctest::Approx(log_likelihood(plain)).epsilon(1e-13));
}

TEST_CASE("input validation") {
  const FlowModel model(small_config(2, 1, 8), 1);
  std::mt19937_64 rng(13);
  try {
    flow_forward(model, random_image(8, 4, rng));
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension);
  }
}

TEST_CASE("actnorm initialization standardizes the first step") {
  FlowModel model(small_config(2, 2, 8), 5);
  std::mt19937_64 rng(14);
  std::vector<Tensor> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_image(8, 8, rng));
  initialize_actnorm(model, batch);
  CHECK(model.actnorm_initialized());
  for (std::size_t step = 0; step < model.step_count(); ++step) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    const auto& slots = model.step(step);
    for (const Tensor& x : batch) {
      const Tensor in = actnorm_input(model, x, step);
      const Tensor out = actnorm(in, model.param(slots.actnorm_scale), model.param(slots.actnorm_bias),
                                 Direction::forward).value;
      for (std::size_t i = 0; i < out.size(); i += out.dim(2)) {
        sum += out[i];
        sq += out[i] * out[i];
        n += 1.0;
      }
    }
    CHECK(std::abs(sum / n) <= 1e-8);
    CHECK(std::abs(sq / n - 1.0) <= 1e-6);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  FlowModel model(small_config(2, 1, 8), 21);
  testing::randomize(model, 22);
  std::stringstream buffer;
  save_checkpoint(model, buffer);
  const FlowModel loaded = load_checkpoint(buffer);
  CHECK(loaded.config() == model.config());
  CHECK(loaded.actnorm_initialized() == model.actnorm_initialized());
  REQUIRE(loaded.parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(loaded.parameters()[i].name == model.parameters()[i].name);
    CHECK(loaded.parameters()[i].value == model.parameters()[i].value);
  }

  std::string bytes = buffer.str();
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  std::string bad_version = bytes;
  bad_version[6] = 9;
  std::stringstream s2(bad_version);
  std::stringstream s3(bytes.substr(0, bytes.size() / 2));
  for (std::stringstream* s : {&s1, &s2, &s3}) {
    try {
      load_checkpoint(*s);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::format);
    }
  }
}

TEST_CASE("parameter count is a function of the config") {
  const FlowConfig cfg = small_config(3, 2, 32, 32);
  CHECK(FlowModel(cfg, 1).scalar_count() == FlowModel(cfg, 2).scalar_count());
  CHECK(parameter_schedule(cfg).size() == 3 * 2 * 7 + 2 * 2 + 2);
}
