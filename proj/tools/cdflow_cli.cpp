// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdflow/cdflow.h"

namespace {

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(cdflow_status s) {
  if (s != CDFLOW_OK) throw RuntimeFailure(std::string(cdflow_status_name(s)) + " error: " + cdflow_last_error());
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Model = std::unique_ptr<cdflow_model, Deleter<cdflow_model, cdflow_model_free>>;
using Image = std::unique_ptr<cdflow_image, Deleter<cdflow_image, cdflow_image_free>>;
using Dataset = std::unique_ptr<cdflow_dataset, Deleter<cdflow_dataset, cdflow_dataset_free>>;
using Report = std::unique_ptr<cdflow_report, Deleter<cdflow_report, cdflow_report_free>>;
using Result = std::unique_ptr<cdflow_result, Deleter<cdflow_result, cdflow_result_free>>;

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text).flush()) throw RuntimeFailure("output error: cannot write " + path);
}

Model load_model(const std::string& path) {
  cdflow_model* m = nullptr;
  check(cdflow_model_load(path.c_str(), &m));
  return Model(m);
}

cdflow_config model_config(const cdflow_model* m) {
  cdflow_config c;
  check(cdflow_model_config(m, &c));
  return c;
}

// Loads a manifest; with center_crop, crops to multiples of 2^scales.
Dataset load_dataset(const std::string& manifest, int scales, bool center_crop) {
  const std::size_t multiple = std::size_t{1} << scales;
  cdflow_dataset* d = nullptr;
  check(cdflow_dataset_load(manifest.c_str(), center_crop ? multiple : 0, &d));
  Dataset ds(d);
  if (cdflow_dataset_size(d) == 0) throw RuntimeFailure("input error: " + manifest + " lists no pairs");
  std::size_t h = 0, w = 0;
  check(cdflow_dataset_image_size(d, &h, &w));
  if (center_crop) {
    std::cerr << "center-crop: images cropped to " << h << "x" << w << " (multiples of " << multiple << ")\n";
  } else if (h % multiple != 0 || w % multiple != 0) {
    throw RuntimeFailure("dimension error: images are " + std::to_string(h) + "x" + std::to_string(w) +
                         ", not divisible by 2^" + std::to_string(scales) + " = " + std::to_string(multiple) +
                         "; pass --center-crop to crop them");
  }
  return ds;
}

void require_model_size(const cdflow_model* m, const cdflow_dataset* d) {
  const cdflow_config c = model_config(m);
  std::size_t h = 0, w = 0;
  check(cdflow_dataset_image_size(d, &h, &w));
  if (h != c.height || w != c.width)
    throw RuntimeFailure("dimension error: images are " + std::to_string(h) + "x" + std::to_string(w) +
                         " but the model expects " + std::to_string(c.height) + "x" + std::to_string(c.width));
}

Image load_image(const std::string& path, int scales, bool center_crop) {
  cdflow_image* raw = nullptr;
  check(cdflow_image_load(path.c_str(), &raw));
  Image img(raw);
  if (!center_crop) return img;
  cdflow_image* cropped = nullptr;
  check(cdflow_image_center_crop(raw, std::size_t{1} << scales, &cropped));
  std::size_t h = 0, w = 0;
  check(cdflow_image_size(cropped, &h, &w));
  std::cerr << "center-crop: " << path << " cropped to " << h << "x" << w << "\n";
  return Image(cropped);
}

std::string report_table(const std::vector<std::pair<std::string, const cdflow_report*>>& rows) {
  std::vector<const cdflow_report*> reports;
  std::vector<const char*> names;
  for (const auto& [name, r] : rows) {
    names.push_back(name.c_str());
    reports.push_back(r);
  }
  char* s = nullptr;
  check(cdflow_report_table(reports.data(), names.data(), rows.size(), &s));
  std::string table(s);
  cdflow_string_free(s);
  return table;
}

void emit_report(const std::string& table, const cdflow_report* primary, const std::string& report_path) {
  std::cout << table;
  if (!report_path.empty()) write_text(report_path, table + "\n" + cdflow_report_kv(primary));
}

void write_predictions(const std::string& path, const cdflow_report* r) {
  if (path.empty()) return;
  std::size_t n = 0;
  const double* p = cdflow_report_predictions(r, &n);
  std::string text;
  for (std::size_t i = 0; i < n; ++i) text += fmt("%.17g", p[i]) + "\n";
  write_text(path, text);
}

struct TrainArgs {
  std::string manifest, out, loss_log;
  bool center_crop = false;
  bool identity_init = false;
  cdflow_config config{};
  cdflow_train_options options{};
};

int run_train(const TrainArgs& a) {
  Dataset ds = load_dataset(a.manifest, a.config.scales, a.center_crop);
  cdflow_config cfg = a.config;
  check(cdflow_dataset_image_size(ds.get(), &cfg.height, &cfg.width));
  cdflow_model* raw = nullptr;
  check(cdflow_model_create(&cfg, a.options.seed, a.identity_init ? 1 : 0, &raw));
  Model model(raw);

  auto on_epoch = [](int epoch, double lr, double ms, double nl, double total, void*) {
    std::printf("epoch %d lr=%.6g loss_ms=%.6f loss_nl=%.6f total=%.6f\n", epoch, lr, ms, nl, total);
    std::fflush(stdout);
  };
  cdflow_train_summary summary{};
  check(cdflow_train(model.get(), ds.get(), &a.options, a.out.c_str(), a.loss_log.empty() ? nullptr : a.loss_log.c_str(),
                     on_epoch, nullptr, &summary));
  check(cdflow_model_save(model.get(), a.out.c_str()));
  std::printf("trained %d epochs on %zu pairs; checkpoint %s\n", summary.epochs, cdflow_dataset_size(ds.get()),
              a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cdflow: perceptual color difference between images via a normalizing flow"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cdflow_version());

  // train
  TrainArgs ta;
  cdflow_config_default(&ta.config);
  cdflow_train_options_default(&ta.options);
  auto* train = app.add_subcommand("train", "train a model on a pair manifest");
  train->add_option("--manifest", ta.manifest, "pair manifest (path_a,path_b,delta_v)")->required();
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--scales,-K", ta.config.scales, "number of scales K")->capture_default_str();
  train->add_option("--steps,-L", ta.config.steps, "flow steps per scale L")->capture_default_str();
  train->add_option("--hidden", ta.config.hidden_width, "coupling network width")->capture_default_str();
  train->add_option("--epochs", ta.options.epochs, "training epochs")->capture_default_str();
  train->add_option("--batch", ta.options.batch_size, "pairs per batch")->capture_default_str();
  train->add_option("--lr", ta.options.lr_init, "initial learning rate")->capture_default_str();
  train->add_option("--lr-decay", ta.options.lr_decay_factor, "learning-rate divisor per decay")->capture_default_str();
  train->add_option("--decay-every", ta.options.decay_every_epochs, "epochs between decays")->capture_default_str();
  train->add_option("--lambda", ta.options.lambda, "likelihood weight")->capture_default_str();
  train->add_option("--p", ta.options.p, "penalty exponent (1 or 2)")->capture_default_str();
  train->add_option("--seed", ta.options.seed, "random seed")->capture_default_str();
  train->add_option("--loss-log", ta.loss_log, "per-batch loss CSV");
  train->add_flag("--identity-init", ta.identity_init, "start from the identity flow");
  train->add_flag("--center-crop", ta.center_crop, "crop images to multiples of 2^K");

  // eval
  std::string checkpoint, manifest, report_path, predictions_path;
  bool center_crop = false;
  std::uint64_t seed = 0;
  auto* evalc = app.add_subcommand("eval", "score a manifest with a trained model");
  evalc->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evalc->add_option("--manifest", manifest, "pair manifest")->required();
  evalc->add_option("--report", report_path, "write the report to this file");
  evalc->add_option("--predictions", predictions_path, "write per-pair predictions");
  evalc->add_flag("--center-crop", center_crop, "crop images to multiples of 2^K");

  // compare
  std::string image_a, image_b, maps_dir;
  bool heat = false;
  auto* comparec = app.add_subcommand("compare", "color difference between two images");
  comparec->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  comparec->add_option("image_a", image_a, "first image")->required();
  comparec->add_option("image_b", image_b, "second image")->required();
  comparec->add_option("--maps", maps_dir, "export per-scale CD maps to this directory");
  comparec->add_flag("--heat", heat, "also write false-color maps");
  comparec->add_flag("--center-crop", center_crop, "crop images to multiples of 2^K");

  // distort-eval
  std::string kind = "translate", baseline_formula = "E76";
  auto* distortc = app.add_subcommand("distort-eval", "robustness to small geometric distortions");
  distortc->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  distortc->add_option("--manifest", manifest, "pair manifest")->required();
  distortc->add_option("--kind", kind, "translate, rotate or dilate")
      ->check(CLI::IsMember({"translate", "rotate", "dilate"}))
      ->capture_default_str();
  distortc->add_option("--baseline", baseline_formula, "classical formula reported alongside")
      ->check(CLI::IsMember({"E76", "E94", "E2000"}))
      ->capture_default_str();
  distortc->add_option("--seed", seed, "distortion seed")->capture_default_str();
  distortc->add_option("--report", report_path, "write the report to this file");
  distortc->add_flag("--center-crop", center_crop, "crop images to multiples of 2^K");

  // gen-synth
  std::size_t n = 100, size = 32;
  std::string out_dir;
  auto* synthc = app.add_subcommand("gen-synth", "write a seeded synthetic pair set");
  synthc->add_option("--n", n, "number of pairs")->capture_default_str();
  synthc->add_option("--size", size, "image height and width")->capture_default_str();
  synthc->add_option("--seed", seed, "random seed")->capture_default_str();
  synthc->add_option("--out", out_dir, "output directory")->required();

  // baseline
  std::string formula;
  auto* baselinec = app.add_subcommand("baseline", "score a manifest with a pixel-mean classical formula");
  baselinec->add_option("--formula", formula, "E76, E94 or E2000")
      ->required()
      ->check(CLI::IsMember({"E76", "E94", "E2000"}));
  baselinec->add_option("--manifest", manifest, "pair manifest")->required();
  baselinec->add_option("--report", report_path, "write the report to this file");
  baselinec->add_option("--predictions", predictions_path, "write per-pair predictions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_train(ta);

    if (*evalc) {
      Model model = load_model(checkpoint);
      Dataset ds = load_dataset(manifest, model_config(model.get()).scales, center_crop);
      require_model_size(model.get(), ds.get());
      cdflow_report* r = nullptr;
      check(cdflow_evaluate(model.get(), ds.get(), CDFLOW_DISTORT_NONE, 0, &r));
      Report report(r);
      emit_report(report_table({{"CD-Flow", r}}), r, report_path);
      write_predictions(predictions_path, r);
      return 0;
    }

    if (*comparec) {
      Model model = load_model(checkpoint);
      const int scales = model_config(model.get()).scales;
      Image a = load_image(image_a, scales, center_crop);
      Image b = load_image(image_b, scales, center_crop);
      cdflow_result* raw = nullptr;
      check(cdflow_compare(model.get(), a.get(), b.get(), &raw));
      Result result(raw);
      std::printf("delta_e=%.9f\n", cdflow_result_delta_e(raw));
      for (std::size_t k = 1; k <= cdflow_result_scales(raw); ++k) {
        double v = 0.0;
        check(cdflow_result_scale_delta_e(raw, static_cast<int>(k), &v));
        std::printf("delta_e_%zu=%.9f\n", k, v);
      }
      if (!maps_dir.empty()) {
        check(cdflow_result_export_maps(raw, maps_dir.c_str(), heat ? 1 : 0));
        std::printf("maps written to %s\n", maps_dir.c_str());
      }
      return 0;
    }

    if (*distortc) {
      Model model = load_model(checkpoint);
      Dataset ds = load_dataset(manifest, model_config(model.get()).scales, center_crop);
      require_model_size(model.get(), ds.get());
      cdflow_distortion d{};
      check(cdflow_parse_distortion(kind.c_str(), &d));
      cdflow_report *fc = nullptr, *fd = nullptr, *bc = nullptr, *bd = nullptr;
      check(cdflow_evaluate(model.get(), ds.get(), CDFLOW_DISTORT_NONE, seed, &fc));
      Report flow_clean(fc);
      check(cdflow_evaluate(model.get(), ds.get(), d, seed, &fd));
      Report flow_dist(fd);
      check(cdflow_evaluate_baseline(baseline_formula.c_str(), ds.get(), CDFLOW_DISTORT_NONE, seed, &bc));
      Report base_clean(bc);
      check(cdflow_evaluate_baseline(baseline_formula.c_str(), ds.get(), d, seed, &bd));
      Report base_dist(bd);
      const std::string table = report_table({{"CD-Flow", fc},
                                              {"CD-Flow+" + kind, fd},
                                              {baseline_formula, bc},
                                              {baseline_formula + "+" + kind, bd}});
      emit_report(table, fd, report_path);
      return 0;
    }

    if (*synthc) {
      cdflow_dataset* raw = nullptr;
      check(cdflow_dataset_synthetic(n, size, size, seed, 1, &raw));
      Dataset ds(raw);
      check(cdflow_dataset_write(raw, out_dir.c_str()));
      std::printf("wrote %zu pairs and %s\n", n,
                  (std::filesystem::path(out_dir) / "manifest.csv").string().c_str());
      return 0;
    }

    if (*baselinec) {
      cdflow_dataset* raw = nullptr;
      check(cdflow_dataset_load(manifest.c_str(), 0, &raw));
      Dataset ds(raw);
      cdflow_report* r = nullptr;
      check(cdflow_evaluate_baseline(formula.c_str(), raw, CDFLOW_DISTORT_NONE, 0, &r));
      Report report(r);
      emit_report(report_table({{formula, r}}), r, report_path);
      write_predictions(predictions_path, r);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "cdflow: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
