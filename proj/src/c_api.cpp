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


#include "msfps/msfps.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "msfps/ablation.hpp"
#include "msfps/capture_io.hpp"
#include "msfps/error.hpp"
#include "msfps/evaluation.hpp"
#include "msfps/gradcheck_suite.hpp"
#include "msfps/l2_solver.hpp"
#include "msfps/photometric.hpp"

struct msfps_capture {
  msfps::LoadedCapture data;
};

struct msfps_dataset {
  std::vector<msfps_capture> captures;
};

struct msfps_normals {
  msfps::NormalMap map;
};

struct msfps_model {
  msfps::MsfModel model;
};

namespace {

using namespace msfps;

thread_local std::string g_last_error;

msfps_status fail(msfps_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Runs `body`, mapping exceptions onto status codes.
template <typename F>
msfps_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return MSFPS_OK;
  } catch (const ConfigError& e) {
    return fail(MSFPS_ERR_USAGE, e.what());
  } catch (const DataError& e) {
    return fail(MSFPS_ERR_DATA, e.what());
  } catch (const StructuralError& e) {
    return fail(MSFPS_ERR_DATA, e.what());
  } catch (const NumericalError& e) {
    return fail(MSFPS_ERR_NUMERICAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MSFPS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MSFPS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MSFPS_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ConfigError(std::string(what) + " must not be NULL");
}

std::optional<std::vector<std::size_t>> parse_subset(const char* subset) {
  if (!subset || !*subset) return std::nullopt;
  return parse_index_list(subset);
}

void copy_name(char* dst, std::size_t size, const std::string& src) {
  std::snprintf(dst, size, "%s", src.c_str());
}

MsfConfig to_cpp(const msfps_model_config& c) {
  MsfConfig m;
  m.base_channels = c.base_channels;
  m.extractor_depth = c.extractor_depth;
  m.kernel_size = c.kernel_size;
  m.normalize_input = c.normalize_input != 0;
  m.use_fusion = c.use_fusion != 0;
  m.share_fusion = c.share_fusion != 0;
  m.per_stage_heads = c.per_stage_heads != 0;
  m.residual_stages = c.residual_stages != 0;
  m.leaky_slope = c.leaky_slope;
  m.inference_norm = c.inference_batch_stats ? NormMode::kBatch : NormMode::kEval;
  m.seed = c.seed;
  return m;
}

msfps_model_config to_c(const MsfConfig& m) {
  msfps_model_config c{};
  c.base_channels = m.base_channels;
  c.extractor_depth = m.extractor_depth;
  c.kernel_size = m.kernel_size;
  c.normalize_input = m.normalize_input;
  c.use_fusion = m.use_fusion;
  c.share_fusion = m.share_fusion;
  c.per_stage_heads = m.per_stage_heads;
  c.residual_stages = m.residual_stages;
  c.leaky_slope = m.leaky_slope;
  c.inference_batch_stats = m.inference_norm != NormMode::kEval;
  c.seed = m.seed;
  return c;
}

TrainConfig to_cpp(const msfps_train_config& c) {
  TrainConfig t;
  for (int s = 0; s < 3; ++s) t.stage_weights[static_cast<std::size_t>(s)] = c.stage_weights[s];
  t.lr = c.lr;
  t.epochs = c.epochs;
  t.batch = c.batch;
  t.seed = c.seed;
  t.strategy = c.selective ? UpdateStrategy::kSelective : UpdateStrategy::kUniform;
  t.optimizer = c.sgd ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  t.beta1 = c.beta1;
  t.beta2 = c.beta2;
  t.adam_eps = c.adam_eps;
  t.clip_norm = c.clip_norm;
  t.augment = c.augment != 0;
  return t;
}

msfps_epoch_metrics to_c(const EpochMetrics& m) {
  msfps_epoch_metrics c{};
  c.epoch = m.epoch;
  for (int s = 0; s < 3; ++s) {
    c.train_loss[s] = m.train_loss[static_cast<std::size_t>(s)];
    c.val_mae[s] = m.val_mae[static_cast<std::size_t>(s)];
  }
  c.train_total = m.train_total;
  c.seconds = m.seconds;
  return c;
}

EpochMetrics to_cpp(const msfps_epoch_metrics& c) {
  EpochMetrics m;
  m.epoch = c.epoch;
  for (int s = 0; s < 3; ++s) {
    m.train_loss[static_cast<std::size_t>(s)] = c.train_loss[s];
    m.val_mae[static_cast<std::size_t>(s)] = c.val_mae[s];
  }
  m.train_total = c.train_total;
  m.seconds = c.seconds;
  return m;
}

std::vector<Sample> samples(const msfps_dataset* ds, bool need_gt) {
  std::vector<Sample> out;
  if (!ds) return out;
  for (const msfps_capture& c : ds->captures) {
    if (!c.data.ground_truth) {
      if (!need_gt) continue;
      throw DataError(c.data.images.name + ": capture has no normal_gt.png");
    }
    out.push_back({c.data.images, *c.data.ground_truth});
  }
  return out;
}

// Scene seeds of the two splits never collide for scene counts < 2^32.
std::uint64_t scene_seed(std::uint64_t seed, int split, std::size_t index) {
  return (seed << 33) ^ (static_cast<std::uint64_t>(split) << 32) ^ index;
}

void write_split(const msfps_render_options& o, const std::filesystem::path& dir, int split,
                 std::size_t count) {
  SceneDistribution dist;
  dist.size = o.size;
  dist.model = o.lambertian ? Reflectance::kLambertian : Reflectance::kBlinnPhong;
  const std::vector<Light> shared = sample_lights(o.lights, o.seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = scene_seed(o.seed, split, i);
    NoiseModel noise;
    noise.sigma = o.noise_sigma;
    noise.cast_shadows = o.cast_shadows != 0;
    noise.seed = s;
    const std::vector<Light> lights = o.per_scene_lights ? sample_lights(o.lights, s) : shared;
    const RenderedCapture cap = render_scene(random_scene(dist, s), lights, noise);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    save_capture(dir / name, cap.images, &cap.ground_truth);
  }
}

}  // namespace

extern "C" {

const char* msfps_version(void) { return "0.1.0"; }

const char* msfps_last_error(void) { return g_last_error.c_str(); }

// ---- synthetic data ----------------------------------------------------------

void msfps_render_options_default(msfps_render_options* o) {
  if (!o) return;
  *o = msfps_render_options{};
  o->scenes = 32;
  o->val_scenes = 0;
  o->size = 32;
  o->lights = 10;
  o->seed = 0;
  o->lambertian = 0;
  o->per_scene_lights = 0;
  o->noise_sigma = 0.0;
  o->cast_shadows = 0;
}

msfps_status msfps_render_dataset(const msfps_render_options* o, const char* out_dir) {
  return guarded([&] {
    require(o, "options");
    require(out_dir, "out_dir");
    if (o->scenes == 0) throw ConfigError("render: scenes must be >= 1");
    if (o->lights == 0) throw ConfigError("render: lights must be >= 1");
    if (o->size < 4) throw ConfigError("render: size must be >= 4");
    if (!(o->noise_sigma >= 0.0)) throw ConfigError("render: noise sigma must be >= 0");
    const std::filesystem::path root(out_dir);
    write_split(*o, root / "train", 0, o->scenes);
    if (o->val_scenes > 0) write_split(*o, root / "val", 1, o->val_scenes);
  });
}

// ---- captures ----------------------------------------------------------------

msfps_status msfps_capture_load(const char* dir, const char* subset, msfps_capture** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<msfps_capture>();
    c->data = load_capture(dir, parse_subset(subset));
    *out = c.release();
  });
}

void msfps_capture_free(msfps_capture* capture) { delete capture; }

const char* msfps_capture_name(const msfps_capture* c) {
  return c ? c->data.images.name.c_str() : "";
}

size_t msfps_capture_image_count(const msfps_capture* c) { return c ? c->data.images.count() : 0; }

int msfps_capture_has_ground_truth(const msfps_capture* c) {
  return c && c->data.ground_truth.has_value();
}

size_t msfps_capture_warning_count(const msfps_capture* c) {
  return c ? c->data.warnings.size() : 0;
}

const char* msfps_capture_warning(const msfps_capture* c, size_t index) {
  if (!c || index >= c->data.warnings.size()) return "";
  return c->data.warnings[index].c_str();
}

msfps_status msfps_dataset_load(const char* root, const char* subset, msfps_dataset** out) {
  return guarded([&] {
    require(root, "root");
    require(out, "out");
    *out = nullptr;
    const auto dirs = list_captures(root);
    if (dirs.empty()) throw DataError(std::string(root) + ": no capture directories found");
    const auto indices = parse_subset(subset);
    auto ds = std::make_unique<msfps_dataset>();
    ds->captures.reserve(dirs.size());
    for (const auto& d : dirs) ds->captures.push_back({load_capture(d, indices)});
    *out = ds.release();
  });
}

void msfps_dataset_free(msfps_dataset* ds) { delete ds; }

size_t msfps_dataset_size(const msfps_dataset* ds) { return ds ? ds->captures.size() : 0; }

const msfps_capture* msfps_dataset_get(const msfps_dataset* ds, size_t index) {
  if (!ds || index >= ds->captures.size()) return nullptr;
  return &ds->captures[index];
}

// ---- normal maps ---------------------------------------------------------------

void msfps_normals_free(msfps_normals* n) { delete n; }

msfps_status msfps_normals_write_png(const msfps_normals* n, const char* path) {
  return guarded([&] {
    require(n, "normals");
    require(path, "path");
    write_png(path, encode_normal_png(n->map));
  });
}

// ---- classical solver ----------------------------------------------------------

msfps_status msfps_solve_l2(const msfps_capture* capture, int trim, const char* out_dir,
                            msfps_normals** normals_out, msfps_l2_result* result) {
  return guarded([&] {
    require(capture, "capture");
    if (normals_out) *normals_out = nullptr;
    L2Options opts;
    opts.trim = trim != 0;
    L2Solution sol = solve_l2(capture->data.images, opts);
    if (out_dir) {
      const std::filesystem::path dir(out_dir);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw DataError(dir.string() + ": cannot create directory (" + ec.message() + ")");
      write_png(dir / "normal.png", encode_normal_png(sol.normals));
      const Mask& mask = capture->data.images.mask;
      const std::size_t px = mask.pixels();
      PngImage albedo;
      albedo.width = mask.width;
      albedo.height = mask.height;
      albedo.samples.resize(3 * px);
      PngImage residual = albedo;
      residual.channels = 1;
      residual.samples.assign(px, 0);
      for (std::size_t p = 0; p < px; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = std::clamp(sol.albedo.data()[c * px + p], 0.0, 1.0);
          albedo.samples[3 * p + c] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
        const double r = std::clamp(sol.residual.data()[p], 0.0, 1.0);
        residual.samples[p] = static_cast<std::uint16_t>(std::lround(r * 65535.0));
      }
      write_png(dir / "albedo.png", albedo);
      write_png(dir / "residual.png", residual);
    }
    if (result) {
      result->condition_number = sol.condition_number;
      result->valid_pixels = sol.normals.mask.count();
    }
    if (normals_out) *normals_out = new msfps_normals{std::move(sol.normals)};
  });
}

// ---- evaluation ----------------------------------------------------------------

msfps_status msfps_evaluate(const msfps_normals* pred, const msfps_capture* capture,
                            const char* error_png, double scale_max, msfps_eval_row* row) {
  return guarded([&] {
    require(pred, "pred");
    require(capture, "capture");
    require(row, "row");
    if (!capture->data.ground_truth) {
      throw DataError(capture->data.images.name + ": capture has no normal_gt.png");
    }
    const NormalMap& gt = *capture->data.ground_truth;
    const EvalReport r = evaluate(pred->map, gt);
    if (error_png) {
      write_png(error_png, render_error_map(r.per_pixel_error, gt.mask,
                                            scale_max > 0.0 ? scale_max : 90.0));
    }
    *row = msfps_eval_row{};
    copy_name(row->name, sizeof row->name, capture->data.images.name);
    row->n_images = capture->data.images.count();
    row->mae_deg = r.mae_deg;
    row->err15 = r.err15;
    row->err30 = r.err30;
    row->n_valid = r.n_valid;
  });
}

msfps_status msfps_write_report(const msfps_eval_row* rows, size_t count, const char* path) {
  return guarded([&] {
    require(path, "path");
    if (count > 0) require(rows, "rows");
    std::vector<EvalReport> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i].name = rows[i].name;
      out[i].n_images = rows[i].n_images;
      out[i].mae_deg = rows[i].mae_deg;
      out[i].err15 = rows[i].err15;
      out[i].err30 = rows[i].err30;
      out[i].n_valid = rows[i].n_valid;
    }
    write_report(path, out);
  });
}

// ---- network -------------------------------------------------------------------

void msfps_model_config_default(msfps_model_config* c) {
  if (c) *c = to_c(MsfConfig{});
}

msfps_status msfps_model_create(const msfps_model_config* config, msfps_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    *out = new msfps_model{MsfModel(to_cpp(*config))};
  });
}

msfps_status msfps_model_load(const char* path, msfps_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new msfps_model{load_checkpoint(path)};
  });
}

msfps_status msfps_model_save(const msfps_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(path, model->model);
  });
}

void msfps_model_free(msfps_model* model) { delete model; }

size_t msfps_model_parameter_count(const msfps_model* model) {
  return model ? model->model.parameter_count() : 0;
}

msfps_status msfps_model_get_config(const msfps_model* model, msfps_model_config* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = to_c(model->model.config());
  });
}

msfps_status msfps_model_predict(msfps_model* model, const msfps_capture* capture, int stage,
                                 msfps_normals** out) {
  return guarded([&] {
    require(model, "model");
    require(capture, "capture");
    require(out, "out");
    *out = nullptr;
    if (stage < 0 || stage > 2) throw ConfigError("stage must be 0, 1 or 2");
    const ImageSet& set = capture->data.images;
    auto outputs = model->model.forward(set);
    *out = new msfps_normals{outputs[static_cast<std::size_t>(stage)].normal_map(set.mask)};
  });
}

// ---- training ------------------------------------------------------------------

void msfps_train_config_default(msfps_train_config* c) {
  if (!c) return;
  const TrainConfig t;
  *c = msfps_train_config{};
  for (int s = 0; s < 3; ++s) c->stage_weights[s] = t.stage_weights[static_cast<std::size_t>(s)];
  c->lr = t.lr;
  c->epochs = t.epochs;
  c->batch = t.batch;
  c->seed = t.seed;
  c->selective = t.strategy == UpdateStrategy::kSelective;
  c->sgd = t.optimizer == OptimizerKind::kSgd;
  c->beta1 = t.beta1;
  c->beta2 = t.beta2;
  c->adam_eps = t.adam_eps;
  c->clip_norm = t.clip_norm;
  c->augment = t.augment;
}

msfps_status msfps_train(msfps_model* model, const msfps_dataset* train_set,
                         const msfps_dataset* val_set, const msfps_train_config* config,
                         const char* log_path, msfps_epoch_callback callback, void* user,
                         size_t* best_epoch) {
  return guarded([&] {
    require(model, "model");
    require(train_set, "train_set");
    require(config, "config");
    const std::vector<Sample> tr = samples(train_set, true);
    const std::vector<Sample> va = samples(val_set, true);
    std::ofstream log;
    if (log_path) {
      log.open(log_path, std::ios::trunc);
      if (!log) throw DataError(std::string(log_path) + ": cannot open for writing");
      log << metrics_header() << '\n';
    }
    TrainResult r = train(model->model, tr, va, to_cpp(*config), [&](const EpochMetrics& m) {
      if (log.is_open()) log << format_metrics_line(m) << '\n' << std::flush;
      if (callback) {
        const msfps_epoch_metrics c = to_c(m);
        callback(&c, user);
      }
    });
    if (log.is_open() && !log) throw DataError(std::string(log_path) + ": write failed");
    model->model = std::move(r.best);
    if (best_epoch) *best_epoch = r.best_epoch;
  });
}

msfps_status msfps_format_metrics(const msfps_epoch_metrics* metrics, char* buffer, size_t size) {
  return guarded([&] {
    require(metrics, "metrics");
    require(buffer, "buffer");
    const std::string line = format_metrics_line(to_cpp(*metrics));
    if (line.size() + 1 > size) throw ConfigError("metrics buffer too small");
    std::memcpy(buffer, line.c_str(), line.size() + 1);
  });
}

// ---- ablation ------------------------------------------------------------------

msfps_status msfps_ablation_check(int mfe, int mff, int sus) {
  return guarded([&] {
    AblationVariant v;
    v.id = -1;
    v.mfe = mfe != 0;
    v.mff = mff != 0;
    v.sus = sus != 0;
    v.validate();
  });
}

msfps_status msfps_ablation_run(int id, const msfps_model_config* model,
                                const msfps_train_config* train_cfg,
                                const msfps_dataset* train_set, const msfps_dataset* val_set,
                                const msfps_dataset* test_set, msfps_ablation_callback callback,
                                void* user, msfps_ablation_row* row) {
  return guarded([&] {
    require(model, "model");
    require(train_cfg, "train");
    require(train_set, "train_set");
    require(test_set, "test_set");
    require(row, "row");
    if (id < 0 || id > 5) throw ConfigError("ablation variant id must be 0..5");
    const AblationVariant& v = ablation_variants()[static_cast<std::size_t>(id)];
    const AblationRow r = run_variant(
        v, to_cpp(*model), to_cpp(*train_cfg), samples(train_set, true), samples(val_set, true),
        samples(test_set, true), [&](const AblationVariant& var, const EpochMetrics& m) {
          if (!callback) return;
          const msfps_epoch_metrics c = to_c(m);
          callback(var.id, &c, user);
        });
    *row = msfps_ablation_row{};
    row->id = v.id;
    row->mfe = v.mfe;
    row->mff = v.mff;
    row->sus = v.sus;
    row->mae_deg = r.mae_deg;
    row->err15 = r.err15;
    row->err30 = r.err30;
    row->best_epoch = r.best_epoch;
    row->seconds = r.seconds;
  });
}

msfps_status msfps_write_ablation_table(const msfps_ablation_row* rows, size_t count,
                                        const char* path) {
  return guarded([&] {
    require(path, "path");
    if (count > 0) require(rows, "rows");
    std::vector<AblationRow> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i].variant = {rows[i].id, rows[i].mfe != 0, rows[i].mff != 0, rows[i].sus != 0};
      out[i].mae_deg = rows[i].mae_deg;
      out[i].err15 = rows[i].err15;
      out[i].err30 = rows[i].err30;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError(std::string(path) + ": cannot open for writing");
    f << format_ablation_table(out);
    if (!f) throw DataError(std::string(path) + ": write failed");
  });
}

// ---- gradient check ------------------------------------------------------------

msfps_status msfps_gradcheck(const msfps_model_config* network, double step, double tolerance,
                             uint64_t seed, msfps_gradcheck_callback callback, void* user,
                             int* all_passed) {
  return guarded([&] {
    require(all_passed, "all_passed");
    GradcheckSuiteOptions opts;
    if (network) opts.network = to_cpp(*network);
    opts.check.step = step;
    opts.check.tolerance = tolerance;
    opts.seed = seed;
    *all_passed = 1;
    for (const GradcheckCase& c : run_gradcheck_suite(opts)) {
      msfps_gradcheck_result r{};
      copy_name(r.name, sizeof r.name, c.name);
      r.max_rel_error = c.report.max_rel_error;
      r.passed = c.report.passed;
      if (!c.report.passed) *all_passed = 0;
      if (callback) callback(&r, user);
    }
  });
}

}  // extern "C"
