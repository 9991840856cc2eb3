// Copyright 2026 The msfps Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface of libmsfps.
 *
 * Every function returning msfps_status sets a thread-local message readable
 * through msfps_last_error() when it fails. Handles are opaque and owned by
 * the caller; free them with the matching *_free function (NULL is a no-op).
 */

#ifndef MSFPS_MSFPS_H_
#define MSFPS_MSFPS_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MSFPS_API __declspec(dllexport)
#else
#define MSFPS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msfps_status {
  MSFPS_OK = 0,
  MSFPS_ERR_USAGE = 1,     /* bad argument or configuration */
  MSFPS_ERR_DATA = 2,      /* unreadable / inconsistent input, I/O failure */
  MSFPS_ERR_NUMERICAL = 3, /* non-finite values, failed gradient check */
  MSFPS_ERR_INTERNAL = 4
} msfps_status;

MSFPS_API const char* msfps_version(void);
/* Message of the last failure on this thread ("" when none). */
MSFPS_API const char* msfps_last_error(void);

typedef struct msfps_capture msfps_capture;
typedef struct msfps_dataset msfps_dataset;
typedef struct msfps_normals msfps_normals;
typedef struct msfps_model msfps_model;

/* ---- synthetic data ---------------------------------------------------- */

typedef struct msfps_render_options {
  size_t scenes;      /* training scenes */
  size_t val_scenes;  /* held-out scenes, written to <out>/val */
  size_t size;        /* image side in pixels */
  size_t lights;
  uint64_t seed;
  int lambertian;         /* 1: Lambertian, 0: Blinn-Phong */
  int per_scene_lights;   /* 1: a new light set for every scene */
  double noise_sigma;
  int cast_shadows;
} msfps_render_options;

MSFPS_API void msfps_render_options_default(msfps_render_options* options);
/* Writes <out>/train/scene_NNNN (and <out>/val/scene_NNNN). */
MSFPS_API msfps_status msfps_render_dataset(const msfps_render_options* options,
                                            const char* out_dir);

/* ---- captures ------------------------------------------------------------ */

/* `subset` is an index list such as "0,2,5-7", or NULL for all images. */
MSFPS_API msfps_status msfps_capture_load(const char* dir, const char* subset,
                                          msfps_capture** out);
MSFPS_API void msfps_capture_free(msfps_capture* capture);
MSFPS_API const char* msfps_capture_name(const msfps_capture* capture);
MSFPS_API size_t msfps_capture_image_count(const msfps_capture* capture);
MSFPS_API int msfps_capture_has_ground_truth(const msfps_capture* capture);
MSFPS_API size_t msfps_capture_warning_count(const msfps_capture* capture);
MSFPS_API const char* msfps_capture_warning(const msfps_capture* capture, size_t index);

/* All captures below `root` (or `root` itself), in lexicographic order. */
MSFPS_API msfps_status msfps_dataset_load(const char* root, const char* subset,
                                          msfps_dataset** out);
MSFPS_API void msfps_dataset_free(msfps_dataset* dataset);
MSFPS_API size_t msfps_dataset_size(const msfps_dataset* dataset);
/* Borrowed; valid while the dataset lives. */
MSFPS_API const msfps_capture* msfps_dataset_get(const msfps_dataset* dataset, size_t index);

/* ---- normal maps ------------------------------------------------------- */

MSFPS_API void msfps_normals_free(msfps_normals* normals);
/* 16-bit RGB, c = round((n + 1) / 2 * 65535), zero off the mask. */
MSFPS_API msfps_status msfps_normals_write_png(const msfps_normals* normals, const char* path);

/* ---- classical solver ---------------------------------------------------- */

typedef struct msfps_l2_result {
  double condition_number;
  size_t valid_pixels;
} msfps_l2_result;

/* Writes normal.png, albedo.png and residual.png into out_dir when it is
 * non-NULL; `normals_out` may be NULL. */
MSFPS_API msfps_status msfps_solve_l2(const msfps_capture* capture, int trim,
                                      const char* out_dir, msfps_normals** normals_out,
                                      msfps_l2_result* result);

/* ---- evaluation ---------------------------------------------------------- */

typedef struct msfps_eval_row {
  char name[256];
  size_t n_images;
  double mae_deg;
  double err15;
  double err30;
  size_t n_valid;
} msfps_eval_row;

/* Scores `pred` against the ground truth of `capture`; writes a colour
 * error map when error_png is non-NULL (scale_max <= 0 selects 90). */
MSFPS_API msfps_status msfps_evaluate(const msfps_normals* pred, const msfps_capture* capture,
                                      const char* error_png, double scale_max,
                                      msfps_eval_row* row);
/* Tab-separated table with a trailing mean row. */
MSFPS_API msfps_status msfps_write_report(const msfps_eval_row* rows, size_t count,
                                          const char* path);

/* ---- network ------------------------------------------------------------- */

typedef struct msfps_model_config {
  size_t base_channels;
  size_t extractor_depth;
  size_t kernel_size;
  int normalize_input;
  int use_fusion;
  int share_fusion;
  int per_stage_heads;
  int residual_stages;
  double leaky_slope;
  int inference_batch_stats; /* 1: per-image statistics, 0: running statistics */
  uint64_t seed;
} msfps_model_config;

MSFPS_API void msfps_model_config_default(msfps_model_config* config);
MSFPS_API msfps_status msfps_model_create(const msfps_model_config* config, msfps_model** out);
MSFPS_API msfps_status msfps_model_load(const char* path, msfps_model** out);
MSFPS_API msfps_status msfps_model_save(const msfps_model* model, const char* path);
MSFPS_API void msfps_model_free(msfps_model* model);
MSFPS_API size_t msfps_model_parameter_count(const msfps_model* model);
MSFPS_API msfps_status msfps_model_get_config(const msfps_model* model, msfps_model_config* out);
/* stage: 0 shallow, 1 middle, 2 deep. */
MSFPS_API msfps_status msfps_model_predict(msfps_model* model, const msfps_capture* capture,
                                           int stage, msfps_normals** out);

/* ---- training ------------------------------------------------------------ */

typedef struct msfps_train_config {
  double stage_weights[3];
  double lr;
  size_t epochs;
  size_t batch;
  uint64_t seed;
  int selective; /* 1: selective update, 0: uniform */
  int sgd;       /* 1: plain SGD, 0: Adam */
  double beta1;
  double beta2;
  double adam_eps;
  double clip_norm;
  int augment;
} msfps_train_config;

typedef struct msfps_epoch_metrics {
  size_t epoch;
  double train_loss[3];
  double train_total;
  double val_mae[3];
  double seconds;
} msfps_epoch_metrics;

typedef void (*msfps_epoch_callback)(const msfps_epoch_metrics* metrics, void* user);

MSFPS_API void msfps_train_config_default(msfps_train_config* config);
/* Trains `model` in place and replaces it with the best epoch (by deep
 * validation MAE; the last epoch without validation data). The metrics log
 * is written to log_path when non-NULL. */
MSFPS_API msfps_status msfps_train(msfps_model* model, const msfps_dataset* train_set,
                                   const msfps_dataset* val_set, const msfps_train_config* config,
                                   const char* log_path, msfps_epoch_callback callback,
                                   void* user, size_t* best_epoch);
/* Tab-separated metrics line without newline, as written to the log. */
MSFPS_API msfps_status msfps_format_metrics(const msfps_epoch_metrics* metrics, char* buffer,
                                            size_t size);

/* ---- ablation ------------------------------------------------------------ */

typedef struct msfps_ablation_row {
  int id;
  int mfe;
  int mff;
  int sus;
  double mae_deg;
  double err15;
  double err30;
  size_t best_epoch;
  double seconds;
} msfps_ablation_row;

typedef void (*msfps_ablation_callback)(int variant, const msfps_epoch_metrics* metrics,
                                        void* user);

/* Validates a variant request: SUS without MFE is a usage error. */
MSFPS_API msfps_status msfps_ablation_check(int mfe, int mff, int sus);
/* Trains variant `id` (0..5) and scores its deep prediction on test_set. */
MSFPS_API msfps_status msfps_ablation_run(int id, const msfps_model_config* model,
                                          const msfps_train_config* train,
                                          const msfps_dataset* train_set,
                                          const msfps_dataset* val_set,
                                          const msfps_dataset* test_set,
                                          msfps_ablation_callback callback, void* user,
                                          msfps_ablation_row* row);
MSFPS_API msfps_status msfps_write_ablation_table(const msfps_ablation_row* rows, size_t count,
                                                  const char* path);

/* ---- gradient check ------------------------------------------------------ */

typedef struct msfps_gradcheck_result {
  char name[128];
  double max_rel_error;
  int passed;
} msfps_gradcheck_result;

typedef void (*msfps_gradcheck_callback)(const msfps_gradcheck_result* result, void* user);

/* Runs the finite-difference suite over every primitive and the full network
 * loss. *all_passed is 1 when every case is within tolerance. */
MSFPS_API msfps_status msfps_gradcheck(const msfps_model_config* network, double step,
                                       double tolerance, uint64_t seed,
                                       msfps_gradcheck_callback callback, void* user,
                                       int* all_passed);

#ifdef __cplusplus
}
#endif

#endif /* MSFPS_MSFPS_H_ */
