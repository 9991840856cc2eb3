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


// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Tolerances are fixed here, not configurable.
//
//   msfps_acceptance [--quick]
//
// --quick skips the training criteria (7, 8 and the toy-run loss check).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "msfps/ablation.hpp"
#include "msfps/capture_io.hpp"
#include "msfps/error.hpp"
#include "msfps/evaluation.hpp"
#include "msfps/gradcheck_suite.hpp"
#include "msfps/l2_solver.hpp"
#include "msfps/msf_net.hpp"
#include "msfps/photometric.hpp"
#include "msfps/preprocess.hpp"
#include "msfps/training.hpp"

namespace {

using namespace msfps;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-6;
constexpr double kGradSeconds = 120.0;
constexpr double kSphereMaeDeg = 0.1;
constexpr double kScaleTolerance = 1e-9;
constexpr double kNormalCodecDeg = 0.01;
constexpr double kTrainSeconds = 30.0 * 60.0;
constexpr std::size_t kTrainScenes = 32;
constexpr std::size_t kHeldOutScenes = 8;
constexpr std::size_t kLights = 10;
constexpr std::size_t kEpochs = 30;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects the findings of one criterion; the first failure wins.
struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int g_failures = 0;

void report(int id, const char* title, const Check& c, const std::string& summary) {
  std::printf("criterion %2d: %s  %s  (%s)\n", id, c.ok ? "PASS" : "FAIL", title,
              c.ok ? summary.c_str() : c.detail.c_str());
  std::fflush(stdout);
  if (!c.ok) ++g_failures;
}

void run_guarded(int id, const char* title, const std::function<std::string(Check&)>& body) {
  Check c;
  std::string summary;
  try {
    summary = body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.detail = std::string("exception: ") + e.what();
  }
  report(id, title, c, summary);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

// ---- 1 -----------------------------------------------------------------------

std::string gradient_correctness(Check& c) {
  GradcheckSuiteOptions o;
  o.check.step = kGradStep;
  o.check.tolerance = kGradTolerance;
  o.network_entries = 0;  // every network parameter
  const auto t0 = Clock::now();
  const auto cases = run_gradcheck_suite(o);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& k : cases) {
    c.require(k.report.finite, k.name + ": non-finite gradient");
    c.require(k.report.passed, fmt("%s: max rel error %.3e", k.name.c_str(), k.report.max_rel_error));
    if (k.report.max_rel_error >= worst) {
      worst = k.report.max_rel_error;
      worst_name = k.name;
    }
  }
  const bool has_network = std::any_of(cases.begin(), cases.end(), [](const GradcheckCase& k) {
    return k.name.rfind("msf_net", 0) == 0;
  });
  c.require(has_network, "full network loss missing from the suite");
  c.require(secs < kGradSeconds, fmt("took %.1fs", secs));
  std::size_t probed = 0;
  for (const auto& k : cases) probed += k.report.entries.size();
  return fmt("%zu cases, %zu entries, worst %.2e (%s), %.1fs", cases.size(), probed, worst, worst_name.c_str(), secs);
}

// ---- 2 -----------------------------------------------------------------------

std::string classical_oracle(Check& c) {
  const auto lights = sample_lights(kLights, 1);
  const Scene sphere = make_sphere(64, 64, Material{});
  const auto cap = render_scene(sphere, lights);
  Mask region = sphere.mask;
  for (std::size_t p = 0; p < region.pixels(); ++p) {
    if (!region.valid[p]) continue;
    for (const Light& l : lights) {
      if (sphere.normals[p].dot(l.direction) <= 1e-6) region.valid[p] = 0;
    }
  }
  const auto t0 = Clock::now();
  const L2Solution sol = solve_l2(cap.images);
  const double secs = seconds_since(t0);
  NormalMap gt = cap.ground_truth;
  gt.mask = region;
  const double mae = evaluate(sol.normals, gt).mae_deg;
  c.require(region.count() > 0, "empty unshadowed region");
  c.require(mae < kSphereMaeDeg, fmt("MAE %.3e deg", mae));
  c.require(secs < 10.0, fmt("took %.1fs", secs));
  return fmt("MAE %.2e deg on %zu unshadowed pixels, %.2fs", mae, region.count(), secs);
}

// ---- 3 -----------------------------------------------------------------------

ImageSet random_observations(std::size_t n, std::size_t size, std::uint64_t seed) {
  ImageSet set;
  set.mask = Mask::full(size, size);
  const auto lights = sample_lights(n, seed);
  for (std::size_t k = 0; k < n; ++k) {
    set.images.push_back(random_tensor({3, size, size}, seed * 131 + k, 0.01, 1.0));
    set.lights.push_back(lights[k]);
  }
  return set;
}

std::string normalization_law(Check& c) {
  double worst_scale = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const ImageSet set = random_observations(7, 6, seed);
    const ImageSet base = normalize_observations(set);
    for (double factor : {1e-3, 0.37, 5.0, 1e3}) {
      ImageSet scaled = set;
      for (Tensor& img : scaled.images) {
        for (double& v : img.mutable_data()) v *= factor;
      }
      const ImageSet out = normalize_observations(scaled);
      for (std::size_t k = 0; k < set.count(); ++k) {
        for (std::size_t i = 0; i < out.images[k].numel(); ++i) {
          worst_scale =
              std::max(worst_scale, std::abs(out.images[k].data()[i] - base.images[k].data()[i]));
        }
      }
    }
  }
  c.require(worst_scale < kScaleTolerance, fmt("scale deviation %.3e", worst_scale));

  double worst_const = 0.0;
  for (std::size_t n : {1u, 3u, 10u, 96u}) {
    ImageSet set;
    set.mask = Mask::full(2, 3);
    const auto lights = sample_lights(n, n);
    for (std::size_t k = 0; k < n; ++k) {
      set.images.push_back(Tensor::full({3, 2, 3}, 0.37));
      set.lights.push_back(lights[k]);
    }
    const ImageSet out = normalize_observations(set);
    const double expect = 1.0 / std::sqrt(static_cast<double>(n));
    for (const Tensor& img : out.images) {
      for (double v : img.data()) worst_const = std::max(worst_const, std::abs(v - expect));
    }
  }
  c.require(worst_const < kScaleTolerance, fmt("constant pixels off 1/sqrt(n) by %.3e", worst_const));

  // same geometry, two random albedo fields
  const auto lights = sample_lights(kLights, 8);
  Scene a = make_wave_relief(24, 24, Material{}, 5);
  Scene b = a;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::size_t p = 0; p < a.albedo.size(); ++p) {
    a.albedo[p] = {u(rng), u(rng), u(rng)};
    b.albedo[p] = {u(rng), u(rng), u(rng)};
  }
  const ImageSet na = normalize_observations(render_scene(a, lights).images, 0.0);
  const ImageSet nb = normalize_observations(render_scene(b, lights).images, 0.0);
  double worst_albedo = 0.0;
  for (std::size_t k = 0; k < na.count(); ++k) {
    for (std::size_t i = 0; i < na.images[k].numel(); ++i) {
      worst_albedo =
          std::max(worst_albedo, std::abs(na.images[k].data()[i] - nb.images[k].data()[i]));
    }
  }
  c.require(worst_albedo < kScaleTolerance, fmt("albedo pair differs by %.3e", worst_albedo));
  return fmt("scale %.1e, 1/sqrt(n) %.1e, albedo %.1e", worst_scale, worst_const, worst_albedo);
}

// ---- 4 -----------------------------------------------------------------------

double max_abs_grad(const ParamGroup& g) {
  double m = 0.0;
  for (const auto& p : g.params) {
    for (double v : p.value.grad()) m = std::max(m, std::abs(v));
  }
  return m;
}

std::string selective_masks(Check& c) {
  MsfConfig cfg;
  cfg.base_channels = 4;
  cfg.extractor_depth = 1;
  cfg.seed = 7;
  MsfModel model(cfg);
  SceneDistribution dist;
  dist.size = 8;
  const auto cap = render_scene(random_scene(dist, 4), sample_lights(4, 4));
  const FreezeSchedule schedule = FreezeSchedule::selective(model);
  const auto run = [&](const std::array<double, 3>& w) {
    model.zero_grad();
    const auto out = model.forward(cap.images, {});
    apply_selective_update(staged_loss(out, cap.ground_truth, w), w, model, schedule);
  };

  run({0.0, 1.0, 0.0});
  std::size_t zeros = 0;
  for (const auto& p : model.group("shallow_extractor").params) {
    // an unallocated gradient buffer means nothing was written
    const auto g = p.value.grad();
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double v = g.empty() ? 0.0 : g[i];
      c.require(v == 0.0, fmt("middle loss wrote %.3e into %s", v, p.name.c_str()));
      ++zeros;
    }
  }
  c.require(max_abs_grad(model.group("middle_extractor")) > 0.0, "middle loss left its extractor");

  run({0.0, 0.0, 1.0});
  double weakest = INFINITY;
  for (const char* g : {"shallow_extractor", "middle_extractor", "deep_extractor"}) {
    const double m = max_abs_grad(model.group(g));
    c.require(m > 0.0, std::string("deep loss left ") + g + " at zero");
    weakest = std::min(weakest, m);
  }

  schedule.validate(model);
  bool nested = true;
  for (int s = 0; s + 1 < 3; ++s) {
    const auto a = schedule.extractor_reach(s);
    const auto b = schedule.extractor_reach(s + 1);
    nested = nested && a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
  }
  c.require(nested, "extractor reach not strictly nested");
  return fmt("%zu shallow entries exactly zero, weakest deep-loss group |g| %.2e, nested", zeros,
             weakest);
}

// ---- 5 -----------------------------------------------------------------------

std::string fusion_identities(Check& c) {
  MsfConfig cfg;
  cfg.base_channels = 6;
  cfg.extractor_depth = 2;
  cfg.seed = 3;
  MsfModel model(cfg);
  const Tensor f = random_tensor({3, 6, 5, 4}, 17);
  const Tensor fm = max_over_set(f);
  std::vector<Tensor> pooled(3, fm);
  const Tensor fm_set = stack(pooled);
  for (int site = 0; site < 2; ++site) {
    ForwardOptions zero, one;
    zero.gate_override = 0.0;
    one.gate_override = 1.0;
    c.require(bitwise_equal(model.fuse(f, site, zero), concat_channels(f, f)),
              fmt("gate 0 at site %d differs from concat(f, f)", site));
    c.require(bitwise_equal(model.fuse(f, site, one), concat_channels(fm_set, f)),
              fmt("gate 1 at site %d differs from concat(f^M, f)", site));
  }
  const Tensor single = random_tensor({1, 6, 4, 4}, 23);
  c.require(bitwise_equal(model.fuse(single, 0, {}), concat_channels(single, single)),
            "n = 1 is not the identity blend");

  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MsfConfig rc = cfg;
    rc.seed = seed;
    MsfModel m(rc);
    const Tensor x = random_tensor({4, 6, 5, 5}, 100 + seed, -3.0, 3.0);
    const Tensor out = m.fuse(x, static_cast<int>(seed % 2), {});
    const Tensor xm = max_over_set(x);
    const std::size_t per = 6 * 25;
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t i = 0; i < per; ++i) {
        const double fi = x.data()[k * per + i];
        const double mi = xm.data()[i];
        const double blend = out.data()[k * 2 * per + i];
        c.require(blend >= std::min(fi, mi) && blend <= std::max(fi, mi),
                  fmt("blend %.17g outside [%.17g, %.17g]", blend, std::min(fi, mi), std::max(fi, mi)));
        ++checked;
      }
    }
  }
  return fmt("gates 0/1 and n = 1 bitwise, %zu blend entries in range", checked);
}

// ---- 6 -----------------------------------------------------------------------

std::string permutation_invariance(Check& c) {
  SceneDistribution dist;
  dist.size = 12;
  const ImageSet set = render_scene(random_scene(dist, 9), sample_lights(6, 9)).images;
  MsfConfig cfg;
  cfg.base_channels = 6;
  cfg.extractor_depth = 2;
  cfg.seed = 4;
  MsfModel model(cfg);
  const auto base = model.forward(set);
  std::mt19937_64 rng(1);
  std::size_t orders = 0;
  for (int t = 0; t < 5; ++t) {
    std::vector<std::size_t> order(set.count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto perm = model.forward(set.subset(order));
    for (std::size_t s = 0; s < 3; ++s) {
      c.require(bitwise_equal(perm[s].normals, base[s].normals),
                fmt("%s normals changed under a permutation", kStageNames[s]));
    }
    ++orders;
  }
  return fmt("%zu random orders, all three stages bitwise equal", orders);
}

// ---- 7, 8 and the toy-run loss trend --------------------------------------------

struct Benchmark {
  std::vector<Sample> train, val, test;
  double l2_test_mae = 0.0;
};

Sample rendered(std::uint64_t seed, const std::vector<Light>& lights) {
  const SceneDistribution dist;  // 32x32 Blinn-Phong
  auto cap = render_scene(random_scene(dist, seed), lights);
  return {std::move(cap.images), std::move(cap.ground_truth)};
}

Benchmark make_benchmark() {
  Benchmark b;
  const auto lights = sample_lights(kLights, 1);
  for (std::size_t i = 0; i < kTrainScenes; ++i) b.train.push_back(rendered(100 + i, lights));
  for (std::size_t i = 0; i < kHeldOutScenes; ++i) b.val.push_back(rendered(9000 + i, lights));
  for (std::size_t i = 0; i < kHeldOutScenes; ++i) b.test.push_back(rendered(9100 + i, lights));
  for (const Sample& s : b.test) b.l2_test_mae += evaluate(solve_l2(s.images).normals, s.ground_truth).mae_deg;
  b.l2_test_mae /= static_cast<double>(b.test.size());
  return b;
}

struct Run {
  std::array<double, 3> test_mae{};
  AblationRow row;
  std::vector<EpochMetrics> log;
  double seconds = 0.0;
};

Run train_variant(const Benchmark& b, int variant, std::uint64_t seed, std::size_t epochs) {
  MsfConfig net;
  net.seed = seed;
  TrainConfig tc;
  tc.seed = seed;
  tc.epochs = epochs;
  const VariantSetup setup = variant_setup(ablation_variants()[static_cast<std::size_t>(variant)], net, tc);
  const auto t0 = Clock::now();
  MsfModel model(setup.network);
  TrainResult result = train(model, b.train, b.val, setup.training, [&](const EpochMetrics& m) {
    std::printf("  (%d) seed %llu %s\n", variant, static_cast<unsigned long long>(seed),
                format_metrics_line(m).c_str());
    std::fflush(stdout);
  });
  Run r;
  r.seconds = seconds_since(t0);
  r.test_mae = validation_mae(result.best, b.test);
  r.row = score_model(result.best, b.test);
  r.row.variant = ablation_variants()[static_cast<std::size_t>(variant)];
  r.row.best_epoch = result.best_epoch;
  r.row.seconds = r.seconds;
  r.log = std::move(result.log);
  return r;
}

bool deep_loss_decreasing(const std::vector<EpochMetrics>& log, std::size_t epochs) {
  if (log.size() < epochs) return false;
  for (std::size_t e = 1; e < epochs; ++e) {
    if (!(log[e].train_loss[2] < log[e - 1].train_loss[2])) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const auto t_start = Clock::now();

  run_guarded(1, "gradient correctness", gradient_correctness);
  run_guarded(2, "classical-solver oracle", classical_oracle);
  run_guarded(3, "normalization law", normalization_law);
  run_guarded(4, "selective-update masks", selective_masks);
  run_guarded(5, "fusion identities", fusion_identities);
  run_guarded(6, "permutation invariance", permutation_invariance);

  if (!quick) {
    std::vector<Run> seeds;
    std::vector<AblationRow> rows;
    Benchmark bench;
    run_guarded(7, "desk-scale end-to-end", [&](Check& c) {
      bench = make_benchmark();
      std::printf("  solve_l2 mean test MAE %.4f over %zu scenes\n", bench.l2_test_mae,
                  bench.test.size());
      int ordered = 0;
      std::string per_seed;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        seeds.push_back(train_variant(bench, 5, seed, kEpochs));
        const Run& r = seeds.back();
        const auto& m = r.test_mae;
        const bool trend = m[0] >= m[1] && m[1] >= m[2];
        ordered += trend ? 1 : 0;
        std::printf("  seed %llu: test MAE shallow %.4f middle %.4f deep %.4f  best epoch %zu  %.0fs\n",
                    static_cast<unsigned long long>(seed), m[0], m[1], m[2], r.row.best_epoch,
                    r.seconds);
        c.require(m[2] < bench.l2_test_mae,
                  fmt("seed %llu deep MAE %.4f >= solve_l2 %.4f",
                      static_cast<unsigned long long>(seed), m[2], bench.l2_test_mae));
        c.require(r.seconds <= kTrainSeconds, fmt("seed %llu took %.0fs", static_cast<unsigned long long>(seed), r.seconds));
        per_seed += fmt("%s%.2f/%.2f/%.2f", seed ? ", " : "", m[0], m[1], m[2]);
      }
      c.require(ordered >= 2, fmt("stage trend holds in %d of 3 seeds (%s)", ordered, per_seed.c_str()));
      return fmt("L2 %.2f, shallow/middle/deep %s, trend in %d of 3", bench.l2_test_mae,
                 per_seed.c_str(), ordered);
    });

    run_guarded(8, "ablation harness", [&](Check& c) {
      c.require(!seeds.empty(), "no variant (5) run available");
      bool rejected = false;
      try {
        AblationVariant{6, false, false, true}.validate();
      } catch (const ConfigError&) {
        rejected = true;
      }
      c.require(rejected, "SUS without MFE was accepted");
      for (int v = 0; v < 5; ++v) rows.push_back(train_variant(bench, v, 0, kEpochs).row);
      if (!seeds.empty()) rows.push_back(seeds[0].row);
      const std::string table = format_ablation_table(rows);
      std::printf("%s", table.c_str());
      std::size_t lines = static_cast<std::size_t>(std::count(table.begin(), table.end(), '\n'));
      c.require(rows.size() == 6 && lines == 7, fmt("table has %zu lines", lines));
      if (rows.size() == 6) {
        c.require(rows[5].mae_deg < rows[0].mae_deg,
                  fmt("(5) MAE %.4f not below (0) %.4f", rows[5].mae_deg, rows[0].mae_deg));
        return fmt("6 variants, (0) %.2f vs (5) %.2f", rows[0].mae_deg, rows[5].mae_deg);
      }
      return std::string("incomplete");
    });

    // Training-module contract, scored on the same benchmark: the deep
    // training loss falls at every one of the first 5 epochs.
    Check trend;
    std::string summary;
    try {
      int good = 0;
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::vector<EpochMetrics> log =
            seed < seeds.size() ? seeds[seed].log : train_variant(bench, 5, seed, 5).log;
        good += deep_loss_decreasing(log, 5) ? 1 : 0;
      }
      trend.require(good >= 4, fmt("deep loss decreasing in %d of 5 seeds", good));
      summary = fmt("deep loss decreasing over epochs 1-5 in %d of 5 seeds", good);
    } catch (const std::exception& e) {
      trend.require(false, std::string("exception: ") + e.what());
    }
    std::printf("toy run     : %s  deep-loss trend  (%s)\n", trend.ok ? "PASS" : "FAIL",
                trend.ok ? summary.c_str() : trend.detail.c_str());
    if (!trend.ok) ++g_failures;
  }

  run_guarded(9, "metric unit tests", [](Check& c) {
    Mask m = Mask::full(1, 2);
    NormalMap gt = NormalMap::zeros(m);
    gt.set(0, {0, 0, 1});
    gt.set(1, {0, 0, 1});
    NormalMap pred = NormalMap::zeros(m);
    const double r10 = 10.0 * M_PI / 180.0, r20 = 20.0 * M_PI / 180.0;
    pred.set(0, {std::sin(r10), 0, std::cos(r10)});
    pred.set(1, {0, std::sin(r20), std::cos(r20)});
    const EvalReport r = evaluate(pred, gt);
    c.require(std::abs(r.mae_deg - 15.0) < 1e-9, fmt("MAE %.12f, expected 15", r.mae_deg));
    c.require(r.err15 == 0.5, fmt("err15 %.6f, expected 0.5", r.err15));
    c.require(r.err30 == 1.0, fmt("err30 %.6f, expected 1", r.err30));
    // a 2x2 map at 0, 14, 29, 45 degrees
    Mask q = Mask::full(2, 2);
    NormalMap g2 = NormalMap::zeros(q), p2 = NormalMap::zeros(q);
    const double degs[4] = {0.0, 14.0, 29.0, 45.0};
    for (std::size_t p = 0; p < 4; ++p) {
      const double a = degs[p] * M_PI / 180.0;
      g2.set(p, {0, 0, 1});
      p2.set(p, {std::sin(a), 0, std::cos(a)});
    }
    const EvalReport r2 = evaluate(p2, g2);
    c.require(std::abs(r2.mae_deg - 22.0) < 1e-9, fmt("MAE %.12f, expected 22", r2.mae_deg));
    c.require(r2.err15 == 0.5 && r2.err30 == 0.75,
              fmt("err15 %.3f err30 %.3f, expected 0.5 0.75", r2.err15, r2.err30));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Mask big = Mask::full(16, 16);
    int monotone = 0;
    for (int t = 0; t < 20; ++t) {
      NormalMap a = NormalMap::zeros(big), b = NormalMap::zeros(big);
      for (std::size_t p = 0; p < big.pixels(); ++p) {
        a.set(p, Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized());
        b.set(p, Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized());
      }
      const EvalReport e = evaluate(a, b);
      c.require(e.err15 <= e.err30, fmt("err15 %.4f > err30 %.4f", e.err15, e.err30));
      ++monotone;
    }
    return fmt("piecewise cases exact, err15 <= err30 on %d random maps", monotone);
  });

  run_guarded(10, "I/O round-trips", [](Check& c) {
    const fs::path dir = fs::temp_directory_path() /
                         ("msfps_acceptance_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    struct Cleanup {
      fs::path p;
      ~Cleanup() {
        std::error_code ec;
        fs::remove_all(p, ec);
      }
    } cleanup{dir};

    SceneDistribution dist;
    dist.size = 16;
    auto cap = render_scene(random_scene(dist, 5), sample_lights(5, 5));
    cap.images.lights[2].intensity = {0.5, 2.0, 1.25};
    save_capture(dir / "capture", cap.images, &cap.ground_truth);
    const LoadedCapture back = load_capture(dir / "capture");
    double worst_q = 0.0;
    c.require(back.images.count() == cap.images.count(), "image count changed");
    c.require(back.images.mask == cap.images.mask, "mask changed");
    const std::size_t px = cap.images.mask.pixels();
    for (std::size_t k = 0; k < back.images.count() && k < cap.images.count(); ++k) {
      c.require(back.images.lights[k].direction == cap.images.lights[k].direction &&
                    back.images.lights[k].intensity == cap.images.lights[k].intensity,
                fmt("light %zu changed", k));
      for (std::size_t i = 0; i < cap.images.images[k].numel(); ++i) {
        const double inten = cap.images.lights[k].intensity[static_cast<int>(i / px)];
        const double raw = std::min(cap.images.images[k].data()[i] * inten, 1.0);
        worst_q = std::max(worst_q, std::abs(back.images.images[k].data()[i] * inten - raw));
      }
    }
    c.require(worst_q <= 0.5 / 65535.0 + 1e-12, fmt("sample error %.3e above half a step", worst_q));

    const std::size_t n = 4096;
    Mask m = Mask::full(64, 64);
    NormalMap map = NormalMap::zeros(m);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (std::size_t p = 0; p < n; ++p) map.set(p, Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized());
    write_png(dir / "n.png", encode_normal_png(map));
    const Tensor err = angular_error_map(decode_normal_png(read_png(dir / "n.png"), &m), map);
    const double worst_deg = *std::max_element(err.data().begin(), err.data().end());
    c.require(worst_deg < kNormalCodecDeg, fmt("normal codec error %.4f deg", worst_deg));

    MsfConfig cfg;
    cfg.base_channels = 6;
    cfg.extractor_depth = 2;
    cfg.seed = 8;
    cfg.per_stage_heads = true;
    MsfModel model(cfg);
    ForwardOptions tr;
    tr.mode = NormMode::kTrain;
    model.forward(cap.images, tr);
    save_checkpoint(dir / "m.ckpt", model);
    const MsfModel loaded = load_checkpoint(dir / "m.ckpt");
    bool same = loaded.group_names() == model.group_names();
    for (std::size_t gi = 0; same && gi < model.groups().size(); ++gi) {
      const auto& x = model.groups()[gi].params;
      const auto& y = loaded.groups()[gi].params;
      same = x.size() == y.size();
      for (std::size_t p = 0; same && p < x.size(); ++p) {
        same = x[p].name == y[p].name && bitwise_equal(x[p].value, y[p].value);
      }
    }
    for (const auto& [name, stats] : model.buffers()) {
      same = same && loaded.buffers().count(name) &&
             bitwise_equal(stats.running_mean, loaded.buffers().at(name).running_mean) &&
             bitwise_equal(stats.running_var, loaded.buffers().at(name).running_var);
    }
    save_checkpoint(dir / "again.ckpt", loaded);
    std::ifstream f1(dir / "m.ckpt", std::ios::binary), f2(dir / "again.ckpt", std::ios::binary);
    const std::string s1{std::istreambuf_iterator<char>(f1), {}};
    const std::string s2{std::istreambuf_iterator<char>(f2), {}};
    c.require(same, "checkpoint values differ after reload");
    c.require(s1 == s2, "re-saved checkpoint differs byte-wise");
    return fmt("capture within %.2e, codec %.4f deg, checkpoint bitwise (%zu bytes)", worst_q,
               worst_deg, s1.size());
  });

  std::printf("%s: %d failing, %.0fs\n", g_failures ? "FAILED" : "ALL PASSED", g_failures,
              seconds_since(t_start));
  return g_failures ? 1 : 0;
}
