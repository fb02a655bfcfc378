// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "cdflow/cdflow.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "color/colorspace.hpp"
#include "common/error.hpp"
#include "eval/distort.hpp"
#include "eval/evaluate.hpp"
#include "flow/checkpoint.hpp"
#include "flow/flow_model.hpp"
#include "io/image_io.hpp"
#include "io/manifest.hpp"
#include "io/map_export.hpp"
#include "metric/cd_metric.hpp"
#include "train/synthetic.hpp"
#include "train/trainer.hpp"

using namespace cdflow;

struct cdflow_model {
  flow::FlowModel model;
};

struct cdflow_image {
  ad::Tensor pixels;
};

struct cdflow_result {
  metric::CdResult result;
};

struct cdflow_dataset {
  std::vector<train::LabeledPair> pairs;
};

struct cdflow_report {
  eval::EvalReport report;
  std::string kv;
};

namespace {

thread_local std::string g_last_error;

cdflow_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension: return CDFLOW_ERR_DIMENSION;
    case ErrorCode::domain: return CDFLOW_ERR_DOMAIN;
    case ErrorCode::singular: return CDFLOW_ERR_SINGULAR;
    case ErrorCode::numeric: return CDFLOW_ERR_NUMERIC;
    case ErrorCode::contract: return CDFLOW_ERR_CONTRACT;
    case ErrorCode::input: return CDFLOW_ERR_INPUT;
    case ErrorCode::output: return CDFLOW_ERR_OUTPUT;
    case ErrorCode::format: return CDFLOW_ERR_FORMAT;
    case ErrorCode::degenerate: return CDFLOW_ERR_DEGENERATE;
  }
  return CDFLOW_ERR_INTERNAL;
}

template <class Fn>
cdflow_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CDFLOW_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return CDFLOW_ERR_INTERNAL;
}

cdflow_status null_argument(const char* fn) {
  g_last_error = std::string(fn) + ": null argument";
  return CDFLOW_ERR_NULL_ARGUMENT;
}

flow::FlowConfig to_config(const cdflow_config& c) {
  flow::FlowConfig f;
  f.scales = c.scales;
  f.steps = c.steps;
  f.hidden_width = c.hidden_width;
  f.clamp = c.clamp;
  f.height = c.height;
  f.width = c.width;
  return f;
}

std::optional<eval::Distortion> to_distortion(cdflow_distortion d) {
  switch (d) {
    case CDFLOW_DISTORT_NONE: return std::nullopt;
    case CDFLOW_DISTORT_TRANSLATE: return eval::Distortion::translate;
    case CDFLOW_DISTORT_ROTATE: return eval::Distortion::rotate;
    case CDFLOW_DISTORT_DILATE: return eval::Distortion::dilate;
  }
  fail(ErrorCode::domain, "unknown distortion code " + std::to_string(static_cast<int>(d)));
}

cdflow_report* make_report(eval::EvalReport r) {
  auto out = std::make_unique<cdflow_report>();
  out->kv = eval::format_report_kv(r);
  out->report = std::move(r);
  return out.release();
}

const metric::CdMap& map_at(const cdflow_result* r, int scale) {
  if (scale < 1 || static_cast<std::size_t>(scale) > r->result.maps.size())
    fail(ErrorCode::domain, "scale " + std::to_string(scale) + " outside 1.." + std::to_string(r->result.maps.size()));
  return r->result.maps[static_cast<std::size_t>(scale - 1)];
}

}  // namespace

extern "C" {

const char* cdflow_last_error(void) { return g_last_error.c_str(); }

const char* cdflow_status_name(cdflow_status status) {
  switch (status) {
    case CDFLOW_OK: return "ok";
    case CDFLOW_ERR_DIMENSION: return "dimension";
    case CDFLOW_ERR_DOMAIN: return "domain";
    case CDFLOW_ERR_SINGULAR: return "singular";
    case CDFLOW_ERR_NUMERIC: return "numeric";
    case CDFLOW_ERR_CONTRACT: return "contract";
    case CDFLOW_ERR_INPUT: return "input";
    case CDFLOW_ERR_OUTPUT: return "output";
    case CDFLOW_ERR_FORMAT: return "format";
    case CDFLOW_ERR_DEGENERATE: return "degenerate";
    case CDFLOW_ERR_NULL_ARGUMENT: return "null argument";
    case CDFLOW_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* cdflow_version(void) { return "1.0.0"; }

void cdflow_config_default(cdflow_config* config) {
  if (!config) return;
  const flow::FlowConfig d;
  config->scales = d.scales;
  config->steps = d.steps;
  config->hidden_width = d.hidden_width;
  config->clamp = d.clamp;
  config->height = d.height;
  config->width = d.width;
}

cdflow_status cdflow_model_create(const cdflow_config* config, uint64_t seed, int identity, cdflow_model** out) {
  if (!config || !out) return null_argument(__func__);
  return guarded([&] {
    *out = new cdflow_model{
        flow::FlowModel(to_config(*config), seed, identity ? flow::FlowInit::identity : flow::FlowInit::random)};
  });
}

cdflow_status cdflow_model_load(const char* path, cdflow_model** out) {
  if (!path || !out) return null_argument(__func__);
  return guarded([&] { *out = new cdflow_model{flow::load_checkpoint(std::string(path))}; });
}

cdflow_status cdflow_model_save(const cdflow_model* model, const char* path) {
  if (!model || !path) return null_argument(__func__);
  return guarded([&] { flow::save_checkpoint(model->model, std::string(path)); });
}

cdflow_status cdflow_model_config(const cdflow_model* model, cdflow_config* out) {
  if (!model || !out) return null_argument(__func__);
  const auto& c = model->model.config();
  *out = cdflow_config{c.scales, c.steps, c.hidden_width, c.clamp, c.height, c.width};
  return CDFLOW_OK;
}

cdflow_status cdflow_model_parameter_count(const cdflow_model* model, size_t* out) {
  if (!model || !out) return null_argument(__func__);
  *out = model->model.scalar_count();
  return CDFLOW_OK;
}

void cdflow_model_free(cdflow_model* model) { delete model; }

cdflow_status cdflow_image_load(const char* path, cdflow_image** out) {
  if (!path || !out) return null_argument(__func__);
  return guarded([&] { *out = new cdflow_image{io::load_image(path)}; });
}

cdflow_status cdflow_image_from_rgb(const double* rgb, size_t height, size_t width, cdflow_image** out) {
  if (!rgb || !out) return null_argument(__func__);
  return guarded([&] {
    if (height == 0 || width == 0) fail(ErrorCode::dimension, "image extents must be positive");
    ad::Tensor t({height, width, 3});
    std::memcpy(&t[0], rgb, t.size() * sizeof(double));
    *out = new cdflow_image{std::move(t)};
  });
}

cdflow_status cdflow_image_save(const cdflow_image* image, const char* path) {
  if (!image || !path) return null_argument(__func__);
  return guarded([&] { io::save_image(image->pixels, path); });
}

cdflow_status cdflow_image_size(const cdflow_image* image, size_t* height, size_t* width) {
  if (!image || !height || !width) return null_argument(__func__);
  *height = image->pixels.shape()[0];
  *width = image->pixels.shape()[1];
  return CDFLOW_OK;
}

const double* cdflow_image_data(const cdflow_image* image) { return image ? &image->pixels[0] : nullptr; }

cdflow_status cdflow_image_center_crop(const cdflow_image* image, size_t multiple, cdflow_image** out) {
  if (!image || !out) return null_argument(__func__);
  return guarded([&] { *out = new cdflow_image{io::center_crop(image->pixels, multiple)}; });
}

void cdflow_image_free(cdflow_image* image) { delete image; }

cdflow_status cdflow_delta_e(const cdflow_model* model, const cdflow_image* a, const cdflow_image* b, double* out) {
  if (!model || !a || !b || !out) return null_argument(__func__);
  return guarded([&] { *out = metric::delta_e(a->pixels, b->pixels, model->model); });
}

cdflow_status cdflow_delta_e_scale(const cdflow_model* model, const cdflow_image* a, const cdflow_image* b, int scale,
                                   double* out) {
  if (!model || !a || !b || !out) return null_argument(__func__);
  return guarded([&] { *out = metric::delta_e_scale(a->pixels, b->pixels, model->model, scale); });
}

cdflow_status cdflow_compare(const cdflow_model* model, const cdflow_image* a, const cdflow_image* b,
                             cdflow_result** out) {
  if (!model || !a || !b || !out) return null_argument(__func__);
  return guarded([&] { *out = new cdflow_result{metric::compare(a->pixels, b->pixels, model->model)}; });
}

double cdflow_result_delta_e(const cdflow_result* result) { return result ? result->result.delta_e : NAN; }

size_t cdflow_result_scales(const cdflow_result* result) { return result ? result->result.per_scale.size() : 0; }

cdflow_status cdflow_result_scale_delta_e(const cdflow_result* result, int scale, double* out) {
  if (!result || !out) return null_argument(__func__);
  return guarded([&] {
    map_at(result, scale);
    *out = result->result.per_scale[static_cast<std::size_t>(scale - 1)];
  });
}

cdflow_status cdflow_result_map(const cdflow_result* result, int scale, size_t* height, size_t* width,
                                const double** data) {
  if (!result || !height || !width || !data) return null_argument(__func__);
  return guarded([&] {
    const metric::CdMap& m = map_at(result, scale);
    *height = m.height;
    *width = m.width;
    *data = m.values.data();
  });
}

cdflow_status cdflow_result_export_maps(const cdflow_result* result, const char* out_dir, int heat) {
  if (!result || !out_dir) return null_argument(__func__);
  return guarded([&] { io::export_cd_maps(result->result, out_dir, {.heat = heat != 0}); });
}

void cdflow_result_free(cdflow_result* result) { delete result; }

cdflow_status cdflow_pixel_delta_e(const char* formula, const cdflow_image* a, const cdflow_image* b, double* out) {
  if (!formula || !a || !b || !out) return null_argument(__func__);
  return guarded([&] { *out = color::image_cd_mean(a->pixels, b->pixels, color::parse_formula(formula)); });
}

cdflow_status cdflow_dataset_load(const char* manifest_path, size_t crop_multiple, cdflow_dataset** out) {
  if (!manifest_path || !out) return null_argument(__func__);
  return guarded([&] {
    const auto entries = io::parse_manifest(manifest_path);
    *out = new cdflow_dataset{io::load_pairs(entries, {.crop_multiple = crop_multiple})};
  });
}

cdflow_status cdflow_dataset_synthetic(size_t n, size_t height, size_t width, uint64_t seed, int quantize,
                                       cdflow_dataset** out) {
  if (!out) return null_argument(__func__);
  return guarded([&] {
    auto pairs = train::gen_synthetic_dataset(n, height, width, seed);
    if (quantize) {
      for (auto& p : pairs) {
        p.image_a = train::quantize8(p.image_a);
        p.image_b = train::quantize8(p.image_b);
        p.delta_v = color::image_cd_mean(p.image_a, p.image_b, color::Formula::e2000);
        p.quantized = true;
      }
    }
    *out = new cdflow_dataset{std::move(pairs)};
  });
}

cdflow_status cdflow_dataset_write(const cdflow_dataset* dataset, const char* out_dir) {
  if (!dataset || !out_dir) return null_argument(__func__);
  return guarded([&] {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) fail(ErrorCode::output, std::string(out_dir) + ": cannot create directory");
    std::vector<io::ManifestEntry> entries;
    char name[64];
    for (std::size_t i = 0; i < dataset->pairs.size(); ++i) {
      const auto& p = dataset->pairs[i];
      io::ManifestEntry e;
      std::snprintf(name, sizeof name, "pair_%05zu_a.png", i);
      e.path_a = name;
      io::save_image(p.image_a, (fs::path(out_dir) / name).string());
      std::snprintf(name, sizeof name, "pair_%05zu_b.png", i);
      e.path_b = name;
      io::save_image(p.image_b, (fs::path(out_dir) / name).string());
      e.delta_v = p.delta_v;
      entries.push_back(std::move(e));
    }
    io::write_manifest((fs::path(out_dir) / "manifest.csv").string(), entries);
  });
}

size_t cdflow_dataset_size(const cdflow_dataset* dataset) { return dataset ? dataset->pairs.size() : 0; }

cdflow_status cdflow_dataset_slice(const cdflow_dataset* dataset, size_t begin, size_t end, cdflow_dataset** out) {
  if (!dataset || !out) return null_argument(__func__);
  return guarded([&] {
    if (begin > end || end > dataset->pairs.size())
      fail(ErrorCode::domain, "slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside dataset of " +
                                  std::to_string(dataset->pairs.size()));
    *out = new cdflow_dataset{{dataset->pairs.begin() + static_cast<std::ptrdiff_t>(begin),
                               dataset->pairs.begin() + static_cast<std::ptrdiff_t>(end)}};
  });
}

cdflow_status cdflow_dataset_image_size(const cdflow_dataset* dataset, size_t* height, size_t* width) {
  if (!dataset || !height || !width) return null_argument(__func__);
  return guarded([&] {
    if (dataset->pairs.empty()) fail(ErrorCode::contract, "dataset is empty");
    *height = dataset->pairs[0].image_a.shape()[0];
    *width = dataset->pairs[0].image_a.shape()[1];
  });
}

void cdflow_dataset_free(cdflow_dataset* dataset) { delete dataset; }

void cdflow_train_options_default(cdflow_train_options* options) {
  if (!options) return;
  const train::TrainConfig d;
  options->batch_size = d.batch_size;
  options->lr_init = d.lr_init;
  options->lr_decay_factor = d.lr_decay_factor;
  options->decay_every_epochs = d.decay_every_epochs;
  options->epochs = d.epochs;
  options->lambda = d.objective.lambda;
  options->p = d.objective.p;
  options->seed = d.seed;
}

cdflow_status cdflow_train(cdflow_model* model, const cdflow_dataset* dataset, const cdflow_train_options* options,
                           const char* checkpoint_path, const char* loss_log_path, cdflow_epoch_callback callback,
                           void* user, cdflow_train_summary* summary) {
  if (!model || !dataset || !options) return null_argument(__func__);
  return guarded([&] {
    train::TrainConfig cfg;
    cfg.batch_size = options->batch_size;
    cfg.lr_init = options->lr_init;
    cfg.lr_decay_factor = options->lr_decay_factor;
    cfg.decay_every_epochs = options->decay_every_epochs;
    cfg.epochs = options->epochs;
    cfg.objective.lambda = options->lambda;
    cfg.objective.p = options->p;
    cfg.seed = options->seed;

    train::TrainHooks hooks;
    if (checkpoint_path) hooks.checkpoint_path = checkpoint_path;
    std::ofstream log;
    if (loss_log_path) {
      log.open(loss_log_path);
      if (!log) fail(ErrorCode::output, std::string(loss_log_path) + ": cannot open for writing");
      log << "epoch,batch,loss_ms,loss_nl,total\n";
      hooks.loss_log = &log;
    }
    if (callback)
      hooks.on_epoch = [&](const train::EpochRecord& r) { callback(r.epoch, r.lr, r.loss_ms, r.loss_nl, r.total, user); };

    const train::TrainLog result = train::train(model->model, dataset->pairs, cfg, hooks);
    if (log.is_open() && !log.flush()) fail(ErrorCode::output, std::string(loss_log_path) + ": write failed");
    if (summary) {
      summary->epochs = static_cast<int>(result.epochs.size());
      summary->initial_loss_ms = result.epochs.empty() ? NAN : result.epochs.front().loss_ms;
      summary->final_loss_ms = result.epochs.empty() ? NAN : result.epochs.back().loss_ms;
      summary->final_total = result.epochs.empty() ? NAN : result.epochs.back().total;
    }
  });
}

cdflow_status cdflow_parse_distortion(const char* name, cdflow_distortion* out) {
  if (!name || !out) return null_argument(__func__);
  return guarded([&] {
    const std::string s(name);
    if (s == "none") {
      *out = CDFLOW_DISTORT_NONE;
      return;
    }
    switch (eval::parse_distortion(s)) {
      case eval::Distortion::translate: *out = CDFLOW_DISTORT_TRANSLATE; break;
      case eval::Distortion::rotate: *out = CDFLOW_DISTORT_ROTATE; break;
      case eval::Distortion::dilate: *out = CDFLOW_DISTORT_DILATE; break;
    }
  });
}

cdflow_status cdflow_evaluate(const cdflow_model* model, const cdflow_dataset* dataset, cdflow_distortion distortion,
                              uint64_t seed, cdflow_report** out) {
  if (!model || !dataset || !out) return null_argument(__func__);
  return guarded([&] {
    const eval::EvalOptions opts{to_distortion(distortion), seed};
    *out = make_report(eval::evaluate(eval::flow_metric(model->model), dataset->pairs, opts));
  });
}

cdflow_status cdflow_evaluate_baseline(const char* formula, const cdflow_dataset* dataset,
                                       cdflow_distortion distortion, uint64_t seed, cdflow_report** out) {
  if (!formula || !dataset || !out) return null_argument(__func__);
  return guarded([&] {
    const eval::EvalOptions opts{to_distortion(distortion), seed};
    *out = make_report(eval::evaluate(eval::pixel_mean_metric(color::parse_formula(formula)), dataset->pairs, opts));
  });
}

cdflow_status cdflow_report_get(const cdflow_report* report, cdflow_report_values* out) {
  if (!report || !out) return null_argument(__func__);
  const auto& r = report->report;
  *out = cdflow_report_values{r.stress, r.plcc, r.srcc, {r.fit[0], r.fit[1], r.fit[2], r.fit[3]}, r.n,
                              r.fit_fallback ? 1 : 0};
  return CDFLOW_OK;
}

const double* cdflow_report_predictions(const cdflow_report* report, size_t* n) {
  if (!report) return nullptr;
  if (n) *n = report->report.predictions.size();
  return report->report.predictions.data();
}

const char* cdflow_report_kv(const cdflow_report* report) { return report ? report->kv.c_str() : nullptr; }

cdflow_status cdflow_report_table(const cdflow_report* const* reports, const char* const* names, size_t n,
                                  char** out) {
  if (!reports || !names || !out) return null_argument(__func__);
  return guarded([&] {
    std::vector<std::pair<std::string, eval::EvalReport>> rows;
    for (size_t i = 0; i < n; ++i) {
      if (!reports[i] || !names[i]) fail(ErrorCode::contract, "cdflow_report_table: null row");
      rows.emplace_back(names[i], reports[i]->report);
    }
    const std::string table = eval::format_report_table(rows);
    char* s = static_cast<char*>(std::malloc(table.size() + 1));
    if (!s) throw std::bad_alloc();
    std::memcpy(s, table.c_str(), table.size() + 1);
    *out = s;
  });
}

void cdflow_report_free(cdflow_report* report) { delete report; }

void cdflow_string_free(char* s) { std::free(s); }

}  // extern "C"
