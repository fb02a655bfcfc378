// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "autodiff/ops.hpp"
#include "color/colorspace.hpp"
#include "common/error.hpp"
#include "eval/evaluate.hpp"
#include "eval/statistics.hpp"
#include "flow/flow.hpp"
#include "flow/flow_model.hpp"
#include "gradcheck.hpp"
#include "jacobian.hpp"
#include "metric/cd_metric.hpp"
#include "sharma_data.hpp"
#include "support.hpp"
#include "train/losses.hpp"
#include "train/synthetic.hpp"
#include "train/trainer.hpp"

using namespace cdflow;
using ad::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  std::set<int> only;
  int epochs = 30;
  double lr = 1e-3;
  int batch = 4;
  int decay_every = 5;
  int hidden = 4;
  std::size_t train_pairs = 500;
  std::size_t holdout_pairs = 100;
  std::uint64_t data_seed = 2024;
  std::uint64_t holdout_seed = 7777;
  std::uint64_t model_seed = 1;
  bool lambda0 = true;
  std::string out_dir;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

int g_failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    o.pass = false;
    o.detail += fmt("; runtime %.1f s exceeds the %.0f s budget", secs, budget_s);
  }
  if (!o.pass) ++g_failures;
  std::printf("criterion %d %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

flow::FlowConfig config(int scales, int steps, int hidden, std::size_t size) {
  flow::FlowConfig c;
  c.scales = scales;
  c.steps = steps;
  c.hidden_width = hidden;
  c.height = size;
  c.width = size;
  return c;
}

flow::FlowModel random_model(const flow::FlowConfig& c, std::uint64_t seed) {
  flow::FlowModel m(c, seed);
  testing::randomize(m, seed + 100000);
  return m;
}

double round_trip_error(const flow::FlowModel& m, const Tensor& x) {
  return ad::max_abs_diff(flow::flow_inverse(m, flow::flow_forward(m, x)), x);
}

Outcome criterion1() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto m = random_model(config(3, 2, 32, 32), i);
    worst = std::max(worst, round_trip_error(m, testing::random_image(32, 32, rng)));
  }
  return {worst <= 1e-6, fmt("100 models K=3 L=2 32x32, max round-trip error %.3e (tol 1e-6)", worst)};
}

Outcome criterion2() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto m = random_model(config(2, 1, 8, 4), 1000 + i);
    const Tensor x = testing::random_image(4, 4, rng);
    const auto jac = testing::numerical_jacobian(
        [&](const Tensor& in) { return flow::flatten_latents(flow::flow_forward(m, in).parts); }, x, 1e-6);
    const double oracle = std::log(std::abs(jac.determinant()));
    worst = std::max(worst, std::abs(oracle - flow::flow_forward(m, x).log_det.item()));
  }
  return {worst <= 1e-3, fmt("10 models K=2 L=1 4x4, max |log_det - log|det J_fd|| %.3e (tol 1e-3)", worst)};
}

Outcome criterion3() {
  flow::FlowModel m = random_model(config(2, 1, 8, 8), 303);
  const auto pairs = train::gen_synthetic_dataset(2, 8, 8, 304);
  train::ObjectiveOptions opts;
  opts.lambda = 1e-4;
  opts.p = 2;
  double worst = 0.0;
  std::string worst_name;
  const auto errors = testing::batch_loss_gradient_errors(pairs, m, opts);
  for (const auto& e : errors)
    if (e.relative_error >= worst) {
      worst = e.relative_error;
      worst_name = e.name;
    }
  return {worst <= 1e-4, fmt("%.0f parameter tensors, worst relative error %.3e", static_cast<double>(errors.size()),
                             worst) +
                             " (" + worst_name + ", tol 1e-4)"};
}

Outcome criterion4() {
  const auto m = random_model(config(3, 2, 16, 16), 404);
  std::mt19937_64 rng(405);
  double worst_violation = -1e300;
  bool symmetric = true, zero = true;
  for (int i = 0; i < 200; ++i) {
    const Tensor x = testing::random_image(16, 16, rng), y = testing::random_image(16, 16, rng),
                 z = testing::random_image(16, 16, rng);
    const double xy = metric::delta_e(x, y, m), yx = metric::delta_e(y, x, m);
    const double yz = metric::delta_e(y, z, m), xz = metric::delta_e(x, z, m);
    symmetric = symmetric && xy == yx;
    zero = zero && metric::delta_e(x, x, m) == 0.0;
    worst_violation = std::max(worst_violation, xz - (xy + yz));
  }
  return {symmetric && zero && worst_violation <= 1e-10,
          std::string("200 triples: symmetry ") + (symmetric ? "exact" : "BROKEN") + ", identity " +
              (zero ? "exact" : "BROKEN") + fmt(", max triangle slack %.3e (tol 1e-10)", worst_violation)};
}

Outcome criterion5() {
  double worst_ref = 0.0, worst_pub = 0.0;
  for (const auto& p : testing::kSharma) {
    const double d = color::delta_e2000(p.c1, p.c2);
    worst_ref = std::max(worst_ref, std::abs(d - p.reference));
    worst_pub = std::max(worst_pub, std::abs(d - p.published));
  }
  return {worst_ref <= 1e-4 && worst_pub <= 1e-4,
          fmt("34 pairs, max error %.3e vs reference implementation, %.3e vs published 4-decimal values (tol 1e-4)",
              worst_ref, worst_pub)};
}

Outcome criterion6() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const std::vector<double> v{1, 2, 3, 5, 8};
  std::vector<double> e(v);
  for (double& x : e) x *= 2.0;
  expect(eval::stress(e, v) == 0.0, "stress(2V, V) = 0");
  expect(std::abs(eval::stress(std::vector<double>{1, 2, 4}, std::vector<double>{1, 2, 3}) -
                  100.0 * std::sqrt(5.0 / 294.0)) <= 1e-10,
         "stress three-point hand value");

  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  std::vector<double> re(50), rv(50);
  for (std::size_t i = 0; i < 50; ++i) {
    re[i] = u(rng);
    rv[i] = u(rng);
  }
  double worst_scale = 0.0;
  for (double c : {1e-3, 0.5, 7.0, 1e3}) {
    std::vector<double> s(re);
    for (double& x : s) x *= c;
    worst_scale = std::max(worst_scale, std::abs(eval::stress(s, rv) - eval::stress(re, rv)));
  }
  expect(worst_scale <= 1e-10, "stress scale invariance");

  expect(std::abs(eval::srcc(std::vector<double>{1, 3, 4, 9, 10}, v) - 1.0) <= 1e-10, "srcc increasing");
  expect(std::abs(eval::srcc(std::vector<double>{10, 9, 4, 3, 1}, v) + 1.0) <= 1e-10, "srcc reversed");
  expect(std::abs(eval::srcc(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}) - 3.0 / std::sqrt(10.0)) <=
             1e-10,
         "srcc tied ranks");

  const eval::LogisticParams truth{4.0, 0.5, 3.0, 0.8};
  std::vector<double> le, lv;
  for (int i = 0; i < 25; ++i) {
    le.push_back(0.25 * i);
    lv.push_back(eval::logistic4(truth, le.back()));
  }
  expect(std::abs(eval::plcc_linearized(le, lv).plcc - 1.0) <= 1e-6, "plcc realizable logistic");
  std::normal_distribution<double> noise(0.0, 0.4);
  std::vector<double> ne(60), nv(60);
  for (std::size_t i = 0; i < 60; ++i) {
    ne[i] = 10.0 * u(rng) / 5.0;
    nv[i] = 4.0 / (1.0 + std::exp(-(ne[i] - 5.0) / 1.5)) + noise(rng);
  }
  expect(eval::plcc_linearized(ne, nv).plcc >= eval::pearson(ne, nv) - 1e-9, "plcc noisy monotone vs raw Pearson");
  try {
    eval::plcc_linearized(le, std::vector<double>(25, 2.0));
    failed.push_back("plcc constant V not rejected");
  } catch (const Error& err) {
    expect(err.code() == ErrorCode::degenerate, "plcc constant V error code");
  }

  std::string detail = "stress/srcc to 1e-10, plcc to 1e-6";
  detail += fmt(", max scale-invariance deviation %.1e", worst_scale);
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {failed.empty(), detail};
}

struct TrainedRun {
  flow::FlowModel model;
  train::TrainLog log;
  double seconds = 0.0;
};

TrainedRun train_desk_model(const Settings& s, const std::vector<train::LabeledPair>& data, double lambda,
                            const std::string& tag) {
  train::TrainConfig tc;
  tc.batch_size = s.batch;
  tc.lr_init = s.lr;
  tc.decay_every_epochs = s.decay_every;
  tc.epochs = s.epochs;
  tc.objective.lambda = lambda;
  tc.seed = s.model_seed;
  flow::FlowModel model(config(3, 2, s.hidden, 32), s.model_seed);

  std::ofstream log_file;
  train::TrainHooks hooks;
  if (!s.out_dir.empty()) {
    std::filesystem::create_directories(s.out_dir);
    log_file.open(s.out_dir + "/loss_" + tag + ".csv");
    hooks.loss_log = &log_file;
    hooks.checkpoint_path = s.out_dir + "/model_" + tag + ".ckpt";
  }
  hooks.on_epoch = [&](const train::EpochRecord& r) {
    std::printf("  [%s] epoch %2d lr=%.3g loss_ms=%.5f loss_nl=%.5f total=%.5f\n", tag.c_str(), r.epoch, r.lr,
                r.loss_ms, r.loss_nl, r.total);
    std::fflush(stdout);
  };
  const auto t0 = std::chrono::steady_clock::now();
  auto log = train::train(model, data, tc, hooks);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(log), secs};
}

double worst_round_trip(const flow::FlowModel& m, const std::vector<train::LabeledPair>& data) {
  double worst = 0.0;
  for (const auto& p : data)
    for (const Tensor* img : {&p.image_a, &p.image_b}) {
      const double err = round_trip_error(m, *img);
      worst = std::isfinite(err) ? std::max(worst, err) : INFINITY;
    }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"acceptance criteria 1-9"};
  std::vector<int> only;
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--epochs", s.epochs)->capture_default_str();
  app.add_option("--lr", s.lr)->capture_default_str();
  app.add_option("--batch", s.batch)->capture_default_str();
  app.add_option("--decay-every", s.decay_every)->capture_default_str();
  app.add_option("--hidden", s.hidden)->capture_default_str();
  app.add_option("--train-pairs", s.train_pairs)->capture_default_str();
  app.add_option("--holdout-pairs", s.holdout_pairs)->capture_default_str();
  app.add_option("--model-seed", s.model_seed)->capture_default_str();
  app.add_option("--out-dir", s.out_dir, "keep loss logs and checkpoints here");
  bool skip_lambda0 = false;
  app.add_flag("--skip-lambda0", skip_lambda0, "skip the informational lambda=0 run");
  CLI11_PARSE(app, argc, argv);
  s.only.insert(only.begin(), only.end());
  s.lambda0 = !skip_lambda0;
  auto wanted = [&](int id) { return s.only.empty() || s.only.count(id) > 0; };

  if (wanted(1)) report(1, "invertibility", 60, criterion1);
  if (wanted(2)) report(2, "log-determinant oracle", 120, criterion2);
  if (wanted(3)) report(3, "gradient oracle", 600, criterion3);
  if (wanted(4)) report(4, "metric axioms", 0, criterion4);
  if (wanted(5)) report(5, "CIEDE2000 test set", 0, criterion5);
  if (wanted(6)) report(6, "statistics", 0, criterion6);

  if (wanted(7) || wanted(8) || wanted(9)) {
    const auto data = train::gen_synthetic_dataset(s.train_pairs, 32, 32, s.data_seed);
    const auto holdout = train::gen_synthetic_dataset(s.holdout_pairs, 32, 32, s.holdout_seed);
    std::printf("training K=3 L=2 hidden %d on %zu pairs for %d epochs (lr %.3g, batch %d, halved every %d epochs)\n",
                s.hidden, s.train_pairs, s.epochs, s.lr, s.batch, s.decay_every);
    std::optional<TrainedRun> run;
    try {
      run.emplace(train_desk_model(s, data, 1e-4, "lambda1e-4"));
    } catch (const std::exception& e) {
      std::printf("training aborted: %s\n", e.what());
    }

    const auto e76 = eval::pixel_mean_metric(color::Formula::e76);
    const flow::FlowModel untrained(config(3, 2, s.hidden, 32), s.model_seed, flow::FlowInit::identity);
    eval::EvalOptions translate;
    translate.distortion = eval::Distortion::translate;
    translate.seed = 88;

    if (wanted(7))
      report(7, "desk-scale learning", 0, [&]() -> Outcome {
        if (!run) return {false, "training did not complete"};
        const double first = run->log.epochs.front().loss_ms, last = run->log.epochs.back().loss_ms;
        const auto trained = eval::evaluate(eval::flow_metric(run->model), holdout);
        const auto base = eval::evaluate(eval::flow_metric(untrained), holdout);
        const auto classic = eval::evaluate(e76, holdout);
        const bool a = last < 0.5 * first;
        const bool b = trained.stress <= 0.7 * base.stress;
        const bool c = trained.srcc >= classic.srcc;
        std::string d = fmt("(a) loss_ms %.4f -> %.4f", first, last) + (a ? " ok" : " NOT < 0.5x") +
                        fmt("; (b) held-out STRESS %.3f vs untrained %.3f", trained.stress, base.stress) +
                        fmt(" (%.1f%% lower)", 100.0 * (1.0 - trained.stress / base.stress)) + (b ? " ok" : " NOT >= 30%") +
                        fmt("; (c) SRCC %.4f vs E76 %.4f", trained.srcc, classic.srcc) + (c ? " ok" : " NOT >=") +
                        fmt("; PLCC %.4f vs E76 %.4f", trained.plcc, classic.plcc) +
                        fmt("; training %.0f s (budget 1800 s)", run->seconds);
        return {a && b && c && run->seconds <= 1800.0, d};
      });

    if (wanted(8))
      report(8, "translation robustness", 0, [&]() -> Outcome {
        if (!run) return {false, "training did not complete"};
        const auto metric = eval::flow_metric(run->model);
        const auto fc = eval::evaluate(metric, holdout), fd = eval::evaluate(metric, holdout, translate);
        const auto bc = eval::evaluate(e76, holdout), bd = eval::evaluate(e76, holdout, translate);
        const double flow_deg = fd.stress - fc.stress, base_deg = bd.stress - bc.stress;
        return {flow_deg <= base_deg, fmt("STRESS degradation: model %.3f -> ", fc.stress, fd.stress) +
                                          fmt("%.3f (%+.3f)", fd.stress, flow_deg) +
                                          fmt(", E76 %.3f -> ", bc.stress) + fmt("%.3f (%+.3f)", bd.stress, base_deg)};
      });

    if (wanted(9))
      report(9, "post-training invertibility", 0, [&]() -> Outcome {
        if (!run) return {false, "training did not complete"};
        const double worst = worst_round_trip(run->model, data);
        std::string d = fmt("max round-trip error over %.0f training images %.3e (tol 1e-4)",
                            2.0 * static_cast<double>(data.size()), worst);
        if (s.lambda0) {
          try {
            const auto free_run = train_desk_model(s, data, 0.0, "lambda0");
            d += fmt("; lambda=0 experiment (informational): max round-trip error %.3e", worst_round_trip(free_run.model, data));
          } catch (const std::exception& e) {
            d += std::string("; lambda=0 experiment (informational): training aborted: ") + e.what();
          }
        }
        return {worst <= 1e-4, d};
      });
  }

  std::printf("%s: %d criterion failure(s)\n", g_failures ? "FAILED" : "ALL PASSED", g_failures);
  return g_failures == 0 ? 0 : 1;
}
