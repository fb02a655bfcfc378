/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright Contributors to the cdflow project. */

#ifndef CDFLOW_CDFLOW_H
#define CDFLOW_CDFLOW_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CDFLOW_API __declspec(dllexport)
#else
#define CDFLOW_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returning cdflow_status reports failure through it and
 * stores a message retrievable with cdflow_last_error() on the calling
 * thread. Output parameters are untouched on failure. */
typedef enum cdflow_status {
  CDFLOW_OK = 0,
  CDFLOW_ERR_DIMENSION = 1,
  CDFLOW_ERR_DOMAIN = 2,
  CDFLOW_ERR_SINGULAR = 3,
  CDFLOW_ERR_NUMERIC = 4,
  CDFLOW_ERR_CONTRACT = 5,
  CDFLOW_ERR_INPUT = 6,
  CDFLOW_ERR_OUTPUT = 7,
  CDFLOW_ERR_FORMAT = 8,
  CDFLOW_ERR_DEGENERATE = 9,
  CDFLOW_ERR_NULL_ARGUMENT = 10,
  CDFLOW_ERR_INTERNAL = 11
} cdflow_status;

typedef struct cdflow_model cdflow_model;
typedef struct cdflow_image cdflow_image;
typedef struct cdflow_result cdflow_result;
typedef struct cdflow_dataset cdflow_dataset;
typedef struct cdflow_report cdflow_report;

CDFLOW_API const char* cdflow_last_error(void);
CDFLOW_API const char* cdflow_status_name(cdflow_status status);
CDFLOW_API const char* cdflow_version(void);

/* ---- models ---- */

typedef struct cdflow_config {
  int scales;       /* K */
  int steps;        /* L, flow steps per scale */
  int hidden_width; /* coupling network width */
  double clamp;     /* coupling log-scale bound */
  size_t height;
  size_t width;
} cdflow_config;

/* K=3, L=2, hidden 32, clamp 2, 32x32. */
CDFLOW_API void cdflow_config_default(cdflow_config* config);

/* identity != 0 gives identity mixing matrices and zero couplings. */
CDFLOW_API cdflow_status cdflow_model_create(const cdflow_config* config, uint64_t seed, int identity,
                                             cdflow_model** out);
CDFLOW_API cdflow_status cdflow_model_load(const char* path, cdflow_model** out);
CDFLOW_API cdflow_status cdflow_model_save(const cdflow_model* model, const char* path);
CDFLOW_API cdflow_status cdflow_model_config(const cdflow_model* model, cdflow_config* out);
CDFLOW_API cdflow_status cdflow_model_parameter_count(const cdflow_model* model, size_t* out);
CDFLOW_API void cdflow_model_free(cdflow_model* model);

/* ---- images: (height, width, 3) RGB in [0, 1], row-major ---- */

CDFLOW_API cdflow_status cdflow_image_load(const char* path, cdflow_image** out);
CDFLOW_API cdflow_status cdflow_image_from_rgb(const double* rgb, size_t height, size_t width, cdflow_image** out);
CDFLOW_API cdflow_status cdflow_image_save(const cdflow_image* image, const char* path);
CDFLOW_API cdflow_status cdflow_image_size(const cdflow_image* image, size_t* height, size_t* width);
/* Pointer valid until the image is freed. */
CDFLOW_API const double* cdflow_image_data(const cdflow_image* image);
CDFLOW_API cdflow_status cdflow_image_center_crop(const cdflow_image* image, size_t multiple, cdflow_image** out);
CDFLOW_API void cdflow_image_free(cdflow_image* image);

/* ---- color difference ---- */

CDFLOW_API cdflow_status cdflow_delta_e(const cdflow_model* model, const cdflow_image* a, const cdflow_image* b,
                                        double* out);
/* scale is 1-based; Delta E_1 equals cdflow_delta_e. */
CDFLOW_API cdflow_status cdflow_delta_e_scale(const cdflow_model* model, const cdflow_image* a,
                                              const cdflow_image* b, int scale, double* out);
CDFLOW_API cdflow_status cdflow_compare(const cdflow_model* model, const cdflow_image* a, const cdflow_image* b,
                                        cdflow_result** out);
CDFLOW_API double cdflow_result_delta_e(const cdflow_result* result);
CDFLOW_API size_t cdflow_result_scales(const cdflow_result* result);
CDFLOW_API cdflow_status cdflow_result_scale_delta_e(const cdflow_result* result, int scale, double* out);
/* Map of the given 1-based scale; data valid until the result is freed. */
CDFLOW_API cdflow_status cdflow_result_map(const cdflow_result* result, int scale, size_t* height, size_t* width,
                                           const double** data);
/* Writes map_scale_k.txt and map_scale_k.pgm per scale, plus a heat PPM if heat != 0. */
CDFLOW_API cdflow_status cdflow_result_export_maps(const cdflow_result* result, const char* out_dir, int heat);
CDFLOW_API void cdflow_result_free(cdflow_result* result);

/* Pixel-mean classical difference; formula is "E76", "E94" or "E2000". */
CDFLOW_API cdflow_status cdflow_pixel_delta_e(const char* formula, const cdflow_image* a, const cdflow_image* b,
                                              double* out);

/* ---- datasets ---- */

/* crop_multiple > 0 center-crops every image to a multiple of it. */
CDFLOW_API cdflow_status cdflow_dataset_load(const char* manifest_path, size_t crop_multiple, cdflow_dataset** out);
/* Seeded synthetic pairs labelled by pixel-mean CIEDE2000. quantize != 0
 * rounds both images to 8 bits and relabels them, so the pairs survive a
 * round trip through image files unchanged. */
CDFLOW_API cdflow_status cdflow_dataset_synthetic(size_t n, size_t height, size_t width, uint64_t seed,
                                                  int quantize, cdflow_dataset** out);
/* Writes pair_NNNNN_a.png / pair_NNNNN_b.png and manifest.csv into out_dir. */
CDFLOW_API cdflow_status cdflow_dataset_write(const cdflow_dataset* dataset, const char* out_dir);
CDFLOW_API size_t cdflow_dataset_size(const cdflow_dataset* dataset);
/* Pairs [begin, end) as a new dataset. */
CDFLOW_API cdflow_status cdflow_dataset_slice(const cdflow_dataset* dataset, size_t begin, size_t end,
                                              cdflow_dataset** out);
CDFLOW_API cdflow_status cdflow_dataset_image_size(const cdflow_dataset* dataset, size_t* height, size_t* width);
CDFLOW_API void cdflow_dataset_free(cdflow_dataset* dataset);

/* ---- training ---- */

typedef struct cdflow_train_options {
  int batch_size;
  double lr_init;
  double lr_decay_factor;
  int decay_every_epochs;
  int epochs;
  double lambda;
  int p;
  uint64_t seed;
} cdflow_train_options;

/* batch 4, lr 1e-5 halved every 5 epochs, 50 epochs, lambda 1e-4, p 2, seed 0. */
CDFLOW_API void cdflow_train_options_default(cdflow_train_options* options);

typedef void (*cdflow_epoch_callback)(int epoch, double lr, double loss_ms, double loss_nl, double total,
                                      void* user);

typedef struct cdflow_train_summary {
  int epochs;
  double initial_loss_ms; /* mean loss_ms of the first epoch */
  double final_loss_ms;   /* mean loss_ms of the last epoch */
  double final_total;
} cdflow_train_summary;

/* checkpoint_path and loss_log_path may be NULL. */
CDFLOW_API cdflow_status cdflow_train(cdflow_model* model, const cdflow_dataset* dataset,
                                      const cdflow_train_options* options, const char* checkpoint_path,
                                      const char* loss_log_path, cdflow_epoch_callback callback, void* user,
                                      cdflow_train_summary* summary);

/* ---- evaluation ---- */

typedef enum cdflow_distortion {
  CDFLOW_DISTORT_NONE = 0,
  CDFLOW_DISTORT_TRANSLATE = 1,
  CDFLOW_DISTORT_ROTATE = 2,
  CDFLOW_DISTORT_DILATE = 3
} cdflow_distortion;

CDFLOW_API cdflow_status cdflow_parse_distortion(const char* name, cdflow_distortion* out);

CDFLOW_API cdflow_status cdflow_evaluate(const cdflow_model* model, const cdflow_dataset* dataset,
                                         cdflow_distortion distortion, uint64_t seed, cdflow_report** out);
CDFLOW_API cdflow_status cdflow_evaluate_baseline(const char* formula, const cdflow_dataset* dataset,
                                                  cdflow_distortion distortion, uint64_t seed, cdflow_report** out);

typedef struct cdflow_report_values {
  double stress;
  double plcc;
  double srcc;
  double fit[4];
  size_t n;
  int fit_fallback;
} cdflow_report_values;

CDFLOW_API cdflow_status cdflow_report_get(const cdflow_report* report, cdflow_report_values* out);
/* Per-pair predictions; valid until the report is freed. */
CDFLOW_API const double* cdflow_report_predictions(const cdflow_report* report, size_t* n);
/* name=value lines; valid until the report is freed. */
CDFLOW_API const char* cdflow_report_kv(const cdflow_report* report);
/* Aligned table of named reports; release with cdflow_string_free. */
CDFLOW_API cdflow_status cdflow_report_table(const cdflow_report* const* reports, const char* const* names, size_t n,
                                             char** out);
CDFLOW_API void cdflow_report_free(cdflow_report* report);

CDFLOW_API void cdflow_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* CDFLOW_CDFLOW_H */
