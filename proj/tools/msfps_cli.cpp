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


// msfps command-line tool. Links only the C interface.
//
//   msfps render    --out DIR [--scenes N --val-scenes M --size S --lights L --seed K]
//   msfps solve     --input DIR --out DIR [--trim] [--subset LIST]
//   msfps train     --train DIR [--val DIR] --out DIR [model and training options]
//   msfps eval      --input DIR --out DIR (--checkpoint FILE | --method l2)
//   msfps gradcheck [--step H --tolerance T]
//   msfps ablate    --train DIR --val DIR --test DIR --out DIR [--variants LIST]
//
// --config FILE (before or after the subcommand) reads an INI file with one
// [section] per subcommand whose keys are the long option names. Flags
// override the file, the file overrides defaults, and unknown keys are
// rejected.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "msfps/msfps.h"

namespace {

namespace fs = std::filesystem;

// Failure carrying a process exit code (the msfps_status value).
struct Failure {
  int code;
  std::string message;
};

void check(msfps_status s) {
  if (s != MSFPS_OK) throw Failure{static_cast<int>(s), msfps_last_error()};
}

[[noreturn]] void usage_error(const std::string& message) {
  throw Failure{MSFPS_ERR_USAGE, message};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Capture = std::unique_ptr<msfps_capture, Deleter<msfps_capture, msfps_capture_free>>;
using Dataset = std::unique_ptr<msfps_dataset, Deleter<msfps_dataset, msfps_dataset_free>>;
using Normals = std::unique_ptr<msfps_normals, Deleter<msfps_normals, msfps_normals_free>>;
using Model = std::unique_ptr<msfps_model, Deleter<msfps_model, msfps_model_free>>;

Dataset load_dataset(const std::string& root, const std::string& subset) {
  msfps_dataset* ds = nullptr;
  check(msfps_dataset_load(root.c_str(), subset.empty() ? nullptr : subset.c_str(), &ds));
  Dataset out(ds);
  for (std::size_t i = 0; i < msfps_dataset_size(ds); ++i) {
    const msfps_capture* c = msfps_dataset_get(ds, i);
    for (std::size_t w = 0; w < msfps_capture_warning_count(c); ++w) {
      std::fprintf(stderr, "warning: %s\n", msfps_capture_warning(c, w));
    }
  }
  return out;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{MSFPS_ERR_DATA, dir + ": cannot create directory (" + ec.message() + ")"};
}

// Prints the resolved configuration of a subcommand and stores it next to
// the outputs when `out_dir` is set.
void log_config(const CLI::App& cmd, const std::string& out_dir) {
  std::string ini = "[" + cmd.get_name() + "]\n" + cmd.config_to_str(true, false);
  std::printf("# resolved config\n%s", ini.c_str());
  if (!out_dir.empty()) {
    make_dir(out_dir);
    const std::string path = out_dir + "/resolved.ini";
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Failure{MSFPS_ERR_DATA, path + ": cannot open for writing"};
    std::fputs(ini.c_str(), f);
    std::fclose(f);
  }
  std::fflush(stdout);
}

struct ModelOptions {
  msfps_model_config c{};
  bool inference_running_stats = false;
  ModelOptions() { msfps_model_config_default(&c); }

  void add(CLI::App& app) {
    app.add_option("--channels", c.base_channels, "feature channels per stage")->capture_default_str();
    app.add_option("--depth", c.extractor_depth, "conv layers per extractor")->capture_default_str();
    app.add_option("--kernel", c.kernel_size, "extractor kernel size (odd)")->capture_default_str();
    app.add_option("--normalize-input", c.normalize_input, "normalize observations first")
        ->capture_default_str();
    app.add_option("--fusion", c.use_fusion, "gated fusion (0: concat)")->capture_default_str();
    app.add_option("--share-fusion", c.share_fusion, "one fusion block for both sites")
        ->capture_default_str();
    app.add_option("--per-stage-heads", c.per_stage_heads, "one regression head per stage")
        ->capture_default_str();
    app.add_option("--residual-stages", c.residual_stages,
                   "middle/deep extractors refine the previous features")
        ->capture_default_str();
    app.add_option("--leaky-slope", c.leaky_slope, "LeakyReLU slope")->capture_default_str();
    app.add_option("--inference-batch-stats", c.inference_batch_stats,
                   "batch-norm inference with per-image statistics")
        ->capture_default_str();
    app.add_option("--model-seed", c.seed, "parameter initialization seed")->capture_default_str();
  }
};

struct TrainOptions {
  msfps_train_config c{};
  std::vector<double> weights;
  std::string strategy = "selective";
  std::string optimizer = "adam";
  TrainOptions() {
    msfps_train_config_default(&c);
    weights.assign(c.stage_weights, c.stage_weights + 3);
  }

  void add(CLI::App& app) {
    app.add_option("--epochs", c.epochs)->capture_default_str();
    app.add_option("--lr", c.lr, "learning rate")->capture_default_str();
    app.add_option("--batch", c.batch, "scenes per optimizer step")->capture_default_str();
    app.add_option("--seed", c.seed, "shuffle / augmentation seed")->capture_default_str();
    app.add_option("--weights", weights, "shallow,middle,deep loss weights")
        ->expected(3)
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--strategy", strategy)
        ->check(CLI::IsMember({"selective", "uniform"}))
        ->capture_default_str();
    app.add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
    app.add_option("--beta1", c.beta1)->capture_default_str();
    app.add_option("--beta2", c.beta2)->capture_default_str();
    app.add_option("--adam-eps", c.adam_eps)->capture_default_str();
    app.add_option("--clip-norm", c.clip_norm, "global gradient norm clip (<= 0 off)")
        ->capture_default_str();
    app.add_option("--augment", c.augment, "random quarter turns and mirrors")->capture_default_str();
  }

  const msfps_train_config& resolve() {
    for (int s = 0; s < 3; ++s) c.stage_weights[s] = weights[static_cast<std::size_t>(s)];
    c.selective = strategy == "selective";
    c.sgd = optimizer == "sgd";
    return c;
  }
};

void print_epoch(const msfps_epoch_metrics* m, void*) {
  char line[512];
  if (msfps_format_metrics(m, line, sizeof line) == MSFPS_OK) {
    std::printf("%s\t(%.1fs)\n", line, m->seconds);
    std::fflush(stdout);
  }
}

// ---- render ------------------------------------------------------------------

struct RenderCmd {
  msfps_render_options o{};
  std::string out;
  RenderCmd() { msfps_render_options_default(&o); }

  void add(CLI::App& app) {
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--scenes", o.scenes, "training scenes")->capture_default_str();
    app.add_option("--val-scenes", o.val_scenes, "validation scenes")->capture_default_str();
    app.add_option("--size", o.size, "image side")->capture_default_str();
    app.add_option("--lights", o.lights)->capture_default_str();
    app.add_option("--seed", o.seed)->capture_default_str();
    app.add_option("--lambertian", o.lambertian, "diffuse-only materials")->capture_default_str();
    app.add_option("--per-scene-lights", o.per_scene_lights)->capture_default_str();
    app.add_option("--noise", o.noise_sigma, "Gaussian noise sigma")->capture_default_str();
    app.add_option("--cast-shadows", o.cast_shadows)->capture_default_str();
  }

  int run(const CLI::App& cmd) {
    if (o.lights == 0) usage_error("--lights must be >= 1");
    if (o.scenes == 0) usage_error("--scenes must be >= 1");
    log_config(cmd, "");
    check(msfps_render_dataset(&o, out.c_str()));
    std::printf("wrote %zu training%s scenes to %s\n", o.scenes,
                o.val_scenes ? (" and " + std::to_string(o.val_scenes) + " validation").c_str() : "",
                out.c_str());
    return 0;
  }
};

// ---- solve -------------------------------------------------------------------

struct SolveCmd {
  std::string input, out, subset;
  bool trim = false;

  void add(CLI::App& app) {
    app.add_option("--input", input, "capture directory or a directory of captures")->required();
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--subset", subset, "image indices, e.g. 20-95");
    app.add_option("--trim", trim, "drop the darkest quarter of observations")->capture_default_str();
  }

  int run(const CLI::App& cmd) {
    log_config(cmd, out);
    Dataset ds = load_dataset(input, subset);
    std::vector<msfps_eval_row> rows;
    for (std::size_t i = 0; i < msfps_dataset_size(ds.get()); ++i) {
      const msfps_capture* c = msfps_dataset_get(ds.get(), i);
      const std::string dir = out + "/" + msfps_capture_name(c);
      msfps_normals* n = nullptr;
      msfps_l2_result info{};
      check(msfps_solve_l2(c, trim, dir.c_str(), &n, &info));
      Normals normals(n);
      std::printf("%s\tcond %.3g\tvalid %zu", msfps_capture_name(c), info.condition_number,
                  info.valid_pixels);
      if (msfps_capture_has_ground_truth(c)) {
        msfps_eval_row row{};
        check(msfps_evaluate(normals.get(), c, (dir + "/error.png").c_str(), 90.0, &row));
        std::printf("\tMAE %.4f", row.mae_deg);
        rows.push_back(row);
      }
      std::printf("\n");
    }
    if (!rows.empty()) check(msfps_write_report(rows.data(), rows.size(), (out + "/report.tsv").c_str()));
    return 0;
  }
};

// ---- train -------------------------------------------------------------------

struct TrainCmd {
  std::string train_dir, val_dir, out, subset, init;
  ModelOptions model;
  TrainOptions training;

  void add(CLI::App& app) {
    app.add_option("--train", train_dir, "training captures")->required();
    app.add_option("--val", val_dir, "validation captures");
    app.add_option("--out", out, "output directory (model.ckpt, metrics.tsv)")->required();
    app.add_option("--subset", subset, "image indices used from every capture");
    app.add_option("--init", init, "start from this checkpoint instead of a fresh model");
    model.add(app);
    training.add(app);
  }

  int run(const CLI::App& cmd) {
    log_config(cmd, out);
    Dataset tr = load_dataset(train_dir, subset);
    Dataset va = val_dir.empty() ? nullptr : load_dataset(val_dir, subset);
    msfps_model* raw = nullptr;
    if (init.empty()) {
      check(msfps_model_create(&model.c, &raw));
    } else {
      check(msfps_model_load(init.c_str(), &raw));
    }
    Model m(raw);
    std::printf("# %zu parameters, %zu training / %zu validation scenes\n",
                msfps_model_parameter_count(m.get()), msfps_dataset_size(tr.get()),
                msfps_dataset_size(va.get()));
    const std::string log = out + "/metrics.tsv";
    std::size_t best = 0;
    check(msfps_train(m.get(), tr.get(), va.get(), &training.resolve(), log.c_str(), print_epoch,
                      nullptr, &best));
    check(msfps_model_save(m.get(), (out + "/model.ckpt").c_str()));
    std::printf("best epoch %zu, checkpoint %s/model.ckpt\n", best, out.c_str());
    return 0;
  }
};

// ---- eval --------------------------------------------------------------------

struct EvalCmd {
  std::string input, out, checkpoint, subset, stage = "deep", method = "net";
  double scale_max = 90.0;

  void add(CLI::App& app) {
    app.add_option("--input", input, "captures with normal_gt.png")->required();
    app.add_option("--out", out, "output directory (report.tsv, error maps)")->required();
    app.add_option("--checkpoint", checkpoint, "trained model");
    app.add_option("--method", method)->check(CLI::IsMember({"net", "l2"}))->capture_default_str();
    app.add_option("--stage", stage)->check(CLI::IsMember({"shallow", "middle", "deep"}))->capture_default_str();
    app.add_option("--subset", subset, "image indices");
    app.add_option("--scale-max", scale_max, "error-map colour scale in degrees")->capture_default_str();
  }

  int run(const CLI::App& cmd) {
    if (method == "net" && checkpoint.empty()) usage_error("eval --method net needs --checkpoint");
    log_config(cmd, out);
    Dataset ds = load_dataset(input, subset);
    Model m;
    if (method == "net") {
      msfps_model* raw = nullptr;
      check(msfps_model_load(checkpoint.c_str(), &raw));
      m.reset(raw);
    }
    const int s = stage == "shallow" ? 0 : stage == "middle" ? 1 : 2;
    std::vector<msfps_eval_row> rows;
    for (std::size_t i = 0; i < msfps_dataset_size(ds.get()); ++i) {
      const msfps_capture* c = msfps_dataset_get(ds.get(), i);
      msfps_normals* raw = nullptr;
      if (m) {
        check(msfps_model_predict(m.get(), c, s, &raw));
      } else {
        check(msfps_solve_l2(c, 0, nullptr, &raw, nullptr));
      }
      Normals n(raw);
      const std::string base = out + "/" + msfps_capture_name(c);
      check(msfps_normals_write_png(n.get(), (base + "_normal.png").c_str()));
      msfps_eval_row row{};
      check(msfps_evaluate(n.get(), c, (base + "_error.png").c_str(), scale_max, &row));
      std::printf("%s\tMAE %.6f\terr15 %.6f\terr30 %.6f\n", row.name, row.mae_deg, row.err15,
                  row.err30);
      rows.push_back(row);
    }
    check(msfps_write_report(rows.data(), rows.size(), (out + "/report.tsv").c_str()));
    double mae = 0.0;
    for (const auto& r : rows) mae += r.mae_deg;
    std::printf("mean MAE %.6f over %zu captures\n", mae / static_cast<double>(rows.size()),
                rows.size());
    return 0;
  }
};

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckCmd {
  double step = 1e-6, tolerance = 1e-4;
  std::uint64_t seed = 0;
  ModelOptions model;

  void add(CLI::App& app) {
    app.add_option("--step", step, "finite-difference step")->capture_default_str();
    app.add_option("--tolerance", tolerance, "max relative error")->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    model.add(app);
  }

  static void print(const msfps_gradcheck_result* r, void*) {
    std::printf("%-36s max rel error %.3e  %s\n", r->name, r->max_rel_error,
                r->passed ? "ok" : "FAIL");
    std::fflush(stdout);
  }

  int run(const CLI::App& cmd) {
    log_config(cmd, "");
    int passed = 0;
    check(msfps_gradcheck(&model.c, step, tolerance, seed, print, nullptr, &passed));
    if (!passed) throw Failure{MSFPS_ERR_NUMERICAL, "gradient check failed"};
    std::printf("all gradient checks passed\n");
    return 0;
  }
};

// ---- ablate ------------------------------------------------------------------

// Resolves "3", "mfe+sus", "none" and friends to a variant id.
int variant_id(const std::string& token) {
  if (!token.empty() && token.find_first_not_of("0123456789") == std::string::npos) {
    const int id = std::stoi(token);
    if (id < 0 || id > 5) usage_error("ablation variant ids are 0..5, got " + token);
    return id;
  }
  bool mfe = false, mff = false, sus = false;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "mfe") mfe = true;
    else if (part == "mff") mff = true;
    else if (part == "sus") sus = true;
    else if (part != "none") usage_error("unknown ablation component '" + part + "'");
  }
  check(msfps_ablation_check(mfe, mff, sus));
  if (!mfe) return mff ? 3 : 0;
  if (!mff) return sus ? 2 : 1;
  return sus ? 5 : 4;
}

struct AblateCmd {
  std::string train_dir, val_dir, test_dir, out;
  std::vector<std::string> variants{"0", "1", "2", "3", "4", "5"};
  ModelOptions model;
  TrainOptions training;

  void add(CLI::App& app) {
    app.add_option("--train", train_dir)->required();
    app.add_option("--val", val_dir, "checkpoint selection scenes");
    app.add_option("--test", test_dir, "scenes scored in the table")->required();
    app.add_option("--out", out, "output directory (ablation.tsv)")->required();
    app.add_option("--variants", variants, "ids 0-5 or component lists like mfe+sus")
        ->delimiter(',')
        ->capture_default_str();
    model.add(app);
    training.add(app);
  }

  static void progress(int id, const msfps_epoch_metrics* m, void*) {
    std::printf("(%d) ", id);
    print_epoch(m, nullptr);
  }

  int run(const CLI::App& cmd) {
    std::vector<int> ids;
    for (const auto& v : variants) ids.push_back(variant_id(v));
    log_config(cmd, out);
    Dataset tr = load_dataset(train_dir, "");
    Dataset va = val_dir.empty() ? nullptr : load_dataset(val_dir, "");
    Dataset te = load_dataset(test_dir, "");
    std::vector<msfps_ablation_row> rows;
    for (int id : ids) {
      msfps_ablation_row row{};
      check(msfps_ablation_run(id, &model.c, &training.resolve(), tr.get(), va.get(), te.get(),
                               progress, nullptr, &row));
      std::printf("(%d) MAE %.4f err15 %.4f err30 %.4f (best epoch %zu, %.0fs)\n", row.id,
                  row.mae_deg, row.err15, row.err30, row.best_epoch, row.seconds);
      rows.push_back(row);
    }
    const std::string path = out + "/ablation.tsv";
    check(msfps_write_ablation_table(rows.data(), rows.size(), path.c_str()));
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (f) {
      char buf[512];
      while (std::fgets(buf, sizeof buf, f)) std::fputs(buf, stdout);
      std::fclose(f);
    }
    return 0;
  }
};

// Keeps top-level keys (rejected later as extras) and the section of the
// subcommand being run; other sections are dropped so that they neither
// fail parsing nor activate their subcommand.
class SectionConfig : public CLI::ConfigINI {
 public:
  explicit SectionConfig(const CLI::App& app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items = CLI::ConfigINI::from_config(input);
    const auto used = app_.get_subcommands();
    const std::string command = used.empty() ? std::string() : used.front()->get_name();
    std::erase_if(items, [&](const CLI::ConfigItem& item) {
      return !item.parents.empty() && item.parents.front() != command;
    });
    return items;
  }

 private:
  const CLI::App& app_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msfps: photometric stereo with multi-stage feature extraction and fusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", msfps_version());
  app.set_config("--config", "", "INI file; keys of [<subcommand>] are long option names");
  app.config_formatter(std::make_shared<SectionConfig>(app));
  app.allow_config_extras(CLI::config_extras_mode::error);

  RenderCmd render;
  SolveCmd solve;
  TrainCmd train;
  EvalCmd eval;
  GradcheckCmd gradcheck;
  AblateCmd ablate;
  struct Entry {
    CLI::App* cmd;
    std::function<int(const CLI::App&)> run;
  };
  std::vector<Entry> entries;
  const auto add = [&](const char* name, const char* help, auto& c) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();  // --config belongs to the main app
    sub->allow_config_extras(CLI::config_extras_mode::error);
    c.add(*sub);
    entries.push_back({sub, [&c](const CLI::App& s) { return c.run(s); }});
  };
  add("render", "generate synthetic train/val captures", render);
  add("solve", "least-squares photometric stereo", solve);
  add("train", "train the network", train);
  add("eval", "score predictions against ground truth", eval);
  add("gradcheck", "finite-difference gradient check", gradcheck);
  add("ablate", "train and score the six ablation variants", ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return MSFPS_ERR_USAGE;
  }
  try {
    for (const Entry& e : entries) {
      if (e.cmd->parsed()) return e.run(*e.cmd);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  }
  return MSFPS_ERR_INTERNAL;
}
