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


// Exercises the C interface from C: status codes, error messages, handle
// lifetimes and a render -> solve -> train -> predict -> evaluate pass.
// Usage: test_c_api <scratch dir>

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "msfps/msfps.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static void on_epoch(const msfps_epoch_metrics* m, void* user) {
  size_t* count = (size_t*)user;
  ++*count;
  EXPECT(m->epoch == *count);
  EXPECT(isfinite(m->train_total));
}

int main(int argc, char** argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: test_c_api <scratch dir>\n");
    return 2;
  }
  char root[1024], path[1200];
  snprintf(root, sizeof root, "%s", argv[1]);

  EXPECT(strlen(msfps_version()) > 0);
  EXPECT(strcmp(msfps_last_error(), "") == 0);

  // NULL handles are no-ops for every *_free
  msfps_capture_free(NULL);
  msfps_dataset_free(NULL);
  msfps_normals_free(NULL);
  msfps_model_free(NULL);
  EXPECT(msfps_dataset_size(NULL) == 0);

  msfps_dataset* ds = NULL;
  EXPECT(msfps_dataset_load("/nonexistent/msfps", NULL, &ds) == MSFPS_ERR_DATA);
  EXPECT(ds == NULL);
  EXPECT(strstr(msfps_last_error(), "/nonexistent/msfps") != NULL);

  msfps_render_options ro;
  msfps_render_options_default(&ro);
  ro.scenes = 2;
  ro.val_scenes = 1;
  ro.size = 10;
  ro.seed = 3;
  ro.lights = 0;
  EXPECT(msfps_render_dataset(&ro, root) == MSFPS_ERR_USAGE);
  ro.lights = 5;
  EXPECT(msfps_render_dataset(&ro, root) == MSFPS_OK);

  snprintf(path, sizeof path, "%s/train", root);
  EXPECT(msfps_dataset_load(path, NULL, &ds) == MSFPS_OK);
  EXPECT(msfps_dataset_size(ds) == 2);
  EXPECT(msfps_dataset_get(ds, 2) == NULL);
  const msfps_capture* cap = msfps_dataset_get(ds, 0);
  EXPECT(cap != NULL);
  EXPECT(msfps_capture_image_count(cap) == 5);
  EXPECT(msfps_capture_has_ground_truth(cap));
  EXPECT(strcmp(msfps_capture_name(cap), "scene_0000") == 0);

  // subsets
  msfps_capture* two = NULL;
  snprintf(path, sizeof path, "%s/train/scene_0001", root);
  EXPECT(msfps_capture_load(path, "0,3", &two) == MSFPS_OK);
  EXPECT(msfps_capture_image_count(two) == 2);
  msfps_normals* n = NULL;
  EXPECT(msfps_solve_l2(two, 0, NULL, &n, NULL) == MSFPS_ERR_DATA);
  EXPECT(strstr(msfps_last_error(), "need") != NULL);
  EXPECT(n == NULL);
  msfps_capture_free(two);
  two = NULL;
  EXPECT(msfps_capture_load(path, "0-9", &two) != MSFPS_OK);

  // classical solver and evaluation
  msfps_l2_result info;
  EXPECT(msfps_solve_l2(cap, 0, NULL, &n, &info) == MSFPS_OK);
  EXPECT(info.condition_number >= 1.0);
  EXPECT(info.valid_pixels > 0);
  msfps_eval_row row;
  EXPECT(msfps_evaluate(n, cap, NULL, 0.0, &row) == MSFPS_OK);
  EXPECT(row.mae_deg > 0.0 && row.mae_deg < 90.0);
  EXPECT(row.err15 <= row.err30);
  EXPECT(row.n_images == 5);
  snprintf(path, sizeof path, "%s/report.tsv", root);
  EXPECT(msfps_write_report(&row, 1, path) == MSFPS_OK);
  snprintf(path, sizeof path, "%s/normal.png", root);
  EXPECT(msfps_normals_write_png(n, path) == MSFPS_OK);
  msfps_normals_free(n);
  n = NULL;

  // model configuration errors
  msfps_model_config mc;
  msfps_model_config_default(&mc);
  EXPECT(mc.base_channels == 16 && mc.extractor_depth == 3 && mc.use_fusion == 1);
  mc.kernel_size = 2;
  msfps_model* model = NULL;
  EXPECT(msfps_model_create(&mc, &model) == MSFPS_ERR_USAGE);
  EXPECT(model == NULL);
  mc.kernel_size = 3;
  mc.base_channels = 4;
  mc.extractor_depth = 1;
  EXPECT(msfps_model_create(&mc, &model) == MSFPS_OK);
  EXPECT(msfps_model_parameter_count(model) > 0);
  EXPECT(msfps_model_predict(model, cap, 3, &n) == MSFPS_ERR_USAGE);

  // training, save, load and prediction
  msfps_train_config tc;
  msfps_train_config_default(&tc);
  EXPECT(tc.stage_weights[0] == 0.5 && tc.stage_weights[1] == 0.5 && tc.stage_weights[2] == 1.0);
  tc.epochs = 2;
  tc.lr = -1.0;
  EXPECT(msfps_train(model, ds, NULL, &tc, NULL, NULL, NULL, NULL) == MSFPS_ERR_USAGE);
  tc.lr = 1e-3;
  snprintf(path, sizeof path, "%s/val", root);
  msfps_dataset* val = NULL;
  EXPECT(msfps_dataset_load(path, NULL, &val) == MSFPS_OK);
  size_t epochs_seen = 0, best = 0;
  snprintf(path, sizeof path, "%s/metrics.tsv", root);
  EXPECT(msfps_train(model, ds, val, &tc, path, on_epoch, &epochs_seen, &best) == MSFPS_OK);
  EXPECT(epochs_seen == 2);
  EXPECT(best >= 1 && best <= 2);

  snprintf(path, sizeof path, "%s/model.ckpt", root);
  EXPECT(msfps_model_save(model, path) == MSFPS_OK);
  msfps_model* loaded = NULL;
  EXPECT(msfps_model_load(path, &loaded) == MSFPS_OK);
  msfps_model_config back;
  EXPECT(msfps_model_get_config(loaded, &back) == MSFPS_OK);
  EXPECT(back.base_channels == 4 && back.extractor_depth == 1);

  msfps_normals* a = NULL;
  msfps_normals* b = NULL;
  EXPECT(msfps_model_predict(model, cap, 2, &a) == MSFPS_OK);
  EXPECT(msfps_model_predict(loaded, cap, 2, &b) == MSFPS_OK);
  msfps_eval_row ra, rb;
  EXPECT(msfps_evaluate(a, cap, NULL, 0.0, &ra) == MSFPS_OK);
  EXPECT(msfps_evaluate(b, cap, NULL, 0.0, &rb) == MSFPS_OK);
  EXPECT(ra.mae_deg == rb.mae_deg);
  msfps_normals_free(a);
  msfps_normals_free(b);

  snprintf(path, sizeof path, "%s/not_a_checkpoint", root);
  FILE* f = fopen(path, "wb");
  if (f) {
    fputs("garbage", f);
    fclose(f);
  }
  msfps_model* bad = NULL;
  EXPECT(msfps_model_load(path, &bad) == MSFPS_ERR_DATA);
  EXPECT(bad == NULL);

  // metrics formatting
  msfps_epoch_metrics m;
  memset(&m, 0, sizeof m);
  m.epoch = 7;
  char line[256];
  EXPECT(msfps_format_metrics(&m, line, sizeof line) == MSFPS_OK);
  EXPECT(strncmp(line, "7\t", 2) == 0);
  EXPECT(msfps_format_metrics(&m, line, 3) != MSFPS_OK);

  // ablation requests
  EXPECT(msfps_ablation_check(1, 1, 1) == MSFPS_OK);
  EXPECT(msfps_ablation_check(0, 1, 1) == MSFPS_ERR_USAGE);
  EXPECT(strstr(msfps_last_error(), "multi-stage feature extraction") != NULL);
  msfps_ablation_row ar;
  EXPECT(msfps_ablation_run(6, &mc, &tc, ds, val, val, NULL, NULL, &ar) == MSFPS_ERR_USAGE);

  msfps_model_free(loaded);
  msfps_model_free(model);
  msfps_dataset_free(val);
  msfps_dataset_free(ds);
  if (failures == 0) printf("c api: all checks passed\n");
  return failures == 0 ? 0 : 1;
}
