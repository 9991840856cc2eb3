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


#include "msfps/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <unordered_map>

#include "msfps/error.hpp"
#include "msfps/evaluation.hpp"

namespace msfps {
namespace {

const char* const kExtractors[] = {"shallow_extractor", "middle_extractor", "deep_extractor"};

std::set<std::string> regression_groups(const MsfModel& model) {
  std::set<std::string> out;
  for (int s = 0; s < 3; ++s) out.insert(model.regression_group(static_cast<Stage>(s)));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

// ---- schedule ----------------------------------------------------------------

FreezeSchedule FreezeSchedule::selective(const MsfModel& model) {
  FreezeSchedule s;
  const auto heads = regression_groups(model);
  s.touch[0] = {"shallow_extractor"};
  s.touch[1] = {"middle_extractor", "fusion_1"};
  s.touch[0].insert(heads.begin(), heads.end());
  s.touch[1].insert(heads.begin(), heads.end());
  for (const auto& name : model.group_names()) s.touch[2].insert(name);
  return s;
}

FreezeSchedule FreezeSchedule::uniform(const MsfModel& model) {
  FreezeSchedule s;
  for (auto& t : s.touch) {
    for (const auto& name : model.group_names()) t.insert(name);
  }
  return s;
}

std::set<std::string> FreezeSchedule::extractor_reach(int stage) const {
  std::set<std::string> out;
  for (int k = 0; k <= stage; ++k) {
    for (const char* e : kExtractors) {
      if (touch[static_cast<std::size_t>(k)].count(e)) out.insert(e);
    }
  }
  return out;
}

void FreezeSchedule::validate(const MsfModel& model) const {
  for (int s = 0; s < 3; ++s) {
    const auto& t = touch[static_cast<std::size_t>(s)];
    const std::string stage = kStageNames[static_cast<std::size_t>(s)];
    for (const auto& name : t) {
      if (!model.has_group(name)) {
        throw ConfigError("freeze schedule for the " + stage +
                          " loss names unknown parameter group '" + name + "'");
      }
    }
    if (!t.count(kExtractors[s])) {
      throw ConfigError("freeze schedule: the " + stage + " loss must be allowed to update " +
                        kExtractors[s]);
    }
    for (int k = s + 1; k < 3; ++k) {
      if (t.count(kExtractors[k])) {
        throw ConfigError("freeze schedule: the " + stage + " loss cannot update " +
                          kExtractors[k] + ", which lies after it");
      }
    }
  }
  for (const char* e : kExtractors) {
    if (!touch[2].count(e)) {
      throw ConfigError(std::string("freeze schedule is not nested: the deep loss must update ") + e);
    }
  }
}

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  for (double w : stage_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("stage weights must be finite and >= 0");
  }
  if (stage_weights[0] + stage_weights[1] + stage_weights[2] == 0.0) {
    throw ConfigError("at least one stage weight must be positive");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam eps must be positive");
}

// ---- losses ------------------------------------------------------------------

Tensor cosine_loss(const Tensor& pred, const NormalMap& gt) {
  if (pred.shape() != gt.normals.shape()) {
    throw StructuralError("cosine_loss: prediction " + shape_str(pred.shape()) +
                          " and ground truth " + shape_str(gt.normals.shape()) + " differ");
  }
  return masked_cosine_loss(pred, gt.normals, gt.mask.valid);
}

StagedLoss staged_loss(const std::array<StageOutput, 3>& outputs, const NormalMap& gt,
                       const std::array<double, 3>& weights) {
  StagedLoss out;
  for (std::size_t s = 0; s < 3; ++s) {
    out.stage[s] = cosine_loss(outputs[s].normals, gt);
    out.values[s] = out.stage[s].item();
  }
  out.total = add(add(scale(out.stage[0], weights[0]), scale(out.stage[1], weights[1])),
                  scale(out.stage[2], weights[2]));
  out.total_value = out.total.item();
  return out;
}

int apply_selective_update(const StagedLoss& losses, const std::array<double, 3>& weights,
                           MsfModel& model, const FreezeSchedule& schedule, double factor) {
  // Terms whose mask hides nothing on their own path share one unmasked
  // pass; the others are grouped by mask.
  Tensor unmasked;
  std::map<std::set<std::string>, Tensor> masked;
  const auto accumulate = [](Tensor& acc, const Tensor& term) {
    acc = acc.defined() ? add(acc, term) : term;
  };
  for (std::size_t s = 0; s < 3; ++s) {
    if (weights[s] == 0.0) continue;
    const Tensor term = scale(losses.stage[s], weights[s] * factor);
    LeafSet allowed;
    for (const auto& name : schedule.touch[s]) allowed.insert(model.group(name));
    bool hides = false;
    for (const TensorImpl* leaf : reachable_leaves(losses.stage[s])) hides |= !allowed.contains(leaf);
    if (hides) {
      accumulate(masked[schedule.touch[s]], term);
    } else {
      accumulate(unmasked, term);
    }
  }
  int passes = 0;
  if (unmasked.defined()) {
    backward(unmasked);
    ++passes;
  }
  for (const auto& [names, loss] : masked) {
    LeafSet allowed;
    for (const auto& name : names) allowed.insert(model.group(name));
    backward(loss, allowed.filter());
    ++passes;
  }
  return passes;
}

// ---- optimizer ---------------------------------------------------------------

namespace {

class Optimizer {
 public:
  Optimizer(MsfModel& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {}

  // Returns the pre-clipping global gradient norm.
  double step() {
    double sq = 0.0;
    for (auto& g : model_.groups()) {
      for (auto& p : g.params) {
        if (!p.value.has_grad()) continue;
        for (double v : p.value.grad()) sq += v * v;
      }
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericalError("gradient norm is not finite");
    const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& g : model_.groups()) {
      if (g.frozen) continue;
      for (auto& p : g.params) {
        if (!p.value.has_grad()) continue;
        const auto grad = p.value.grad();
        auto w = p.value.mutable_data();
        if (cfg_.optimizer == OptimizerKind::kSgd) {
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.lr * clip * grad[i];
          continue;
        }
        auto& st = state_[p.value.impl()];
        if (st.m.empty()) {
          st.m.assign(w.size(), 0.0);
          st.v.assign(w.size(), 0.0);
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = clip * grad[i];
          st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
          st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
          const double mh = st.m[i] / bc1;
          const double vh = st.v[i] / bc2;
          w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.adam_eps);
        }
      }
    }
    return norm;
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  MsfModel& model_;
  const TrainConfig& cfg_;
  std::size_t t_ = 0;
  std::unordered_map<const TensorImpl*, Moments> state_;
};

}  // namespace

// ---- augmentation ------------------------------------------------------------

Sample transform_sample(const Sample& s, int quarter_turns, bool mirror) {
  quarter_turns = ((quarter_turns % 4) + 4) % 4;
  if (quarter_turns == 0 && !mirror) return s;
  const std::size_t h = s.images.height(), w = s.images.width();
  const bool swap = quarter_turns % 2 == 1;
  const std::size_t h2 = swap ? w : h, w2 = swap ? h : w;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx2 = (static_cast<double>(w2) - 1.0) / 2.0, cy2 = (static_cast<double>(h2) - 1.0) / 2.0;

  // Vector map in camera coordinates: mirror x, then rotate by quarter turns.
  const auto rot = [&](Eigen::Vector3d v) {
    if (mirror) v.x() = -v.x();
    for (int k = 0; k < quarter_turns; ++k) v = Eigen::Vector3d(-v.y(), v.x(), v.z());
    return v;
  };
  // Source pixel of every destination pixel (inverse map).
  std::vector<std::size_t> src(h2 * w2);
  for (std::size_t r2 = 0; r2 < h2; ++r2) {
    for (std::size_t c2 = 0; c2 < w2; ++c2) {
      double x = static_cast<double>(c2) - cx2, y = cy2 - static_cast<double>(r2);
      for (int k = 0; k < quarter_turns; ++k) {
        const double nx = y, ny = -x;  // inverse of (x,y) -> (-y,x)
        x = nx;
        y = ny;
      }
      if (mirror) x = -x;
      const auto c = static_cast<std::size_t>(std::lround(x + cx));
      const auto r = static_cast<std::size_t>(std::lround(cy - y));
      src[r2 * w2 + c2] = r * w + c;
    }
  }
  const auto remap = [&](const Tensor& t, std::size_t channels) {
    const auto d = t.data();
    std::vector<double> out(channels * h2 * w2);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < h2 * w2; ++p) out[c * h2 * w2 + p] = d[c * h * w + src[p]];
    }
    return Tensor::from_vector({channels, h2, w2}, std::move(out));
  };

  Sample out;
  out.images.name = s.images.name;
  out.images.mask.height = h2;
  out.images.mask.width = w2;
  out.images.mask.valid.resize(h2 * w2);
  for (std::size_t p = 0; p < h2 * w2; ++p) out.images.mask.valid[p] = s.images.mask.valid[src[p]];
  for (std::size_t i = 0; i < s.images.count(); ++i) {
    out.images.images.push_back(remap(s.images.images[i], 3));
    Light l = s.images.lights[i];
    l.direction = rot(l.direction);
    out.images.lights.push_back(l);
  }
  Mask gmask;
  gmask.height = h2;
  gmask.width = w2;
  gmask.valid.resize(h2 * w2);
  for (std::size_t p = 0; p < h2 * w2; ++p) gmask.valid[p] = s.ground_truth.mask.valid[src[p]];
  out.ground_truth = NormalMap::zeros(gmask);
  for (std::size_t p = 0; p < h2 * w2; ++p) {
    if (gmask.valid[p]) out.ground_truth.set(p, rot(s.ground_truth.at(src[p])));
  }
  return out;
}

// ---- loop --------------------------------------------------------------------

std::array<double, 3> validation_mae(MsfModel& model, const std::vector<Sample>& val) {
  std::array<double, 3> mae{};
  if (val.empty()) {
    mae.fill(std::numeric_limits<double>::quiet_NaN());
    return mae;
  }
  for (const Sample& s : val) {
    const auto out = model.forward(s.images);
    for (std::size_t k = 0; k < 3; ++k) {
      mae[k] += evaluate(out[k].normal_map(s.images.mask), s.ground_truth).mae_deg;
    }
  }
  for (double& m : mae) m /= static_cast<double>(val.size());
  return mae;
}

std::string metrics_header() {
  return "# epoch\tL_shallow\tL_middle\tL_deep\ttotal\tval_MAE_shallow\tval_MAE_middle\tval_MAE_deep";
}

std::string format_metrics_line(const EpochMetrics& m) {
  std::string line = std::to_string(m.epoch);
  for (double v : m.train_loss) line += "\t" + fmt(v);
  line += "\t" + fmt(m.train_total);
  for (double v : m.val_mae) line += "\t" + (std::isnan(v) ? std::string("nan") : fmt(v));
  return line;
}

TrainResult train(MsfModel& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  const FreezeSchedule schedule = config.strategy == UpdateStrategy::kSelective
                                      ? FreezeSchedule::selective(model)
                                      : FreezeSchedule::uniform(model);
  // the nesting contract constrains masked schedules only
  if (config.strategy == UpdateStrategy::kSelective) schedule.validate(model);

  TrainResult result{model.clone(), 0, {}};
  double best = std::numeric_limits<double>::infinity();
  Optimizer opt(model, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  ForwardOptions fwd;
  fwd.mode = NormMode::kTrain;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      const double factor = 1.0 / static_cast<double>(stop - start);
      model.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const Sample* sample = &train_set[order[b]];
        Sample augmented;
        if (config.augment) {
          const std::uint64_t r = rng();
          augmented = transform_sample(*sample, static_cast<int>(r % 4), ((r >> 2) & 1) != 0);
          sample = &augmented;
        }
        const auto out = model.forward(sample->images, fwd);
        const StagedLoss loss = staged_loss(out, sample->ground_truth, config.stage_weights);
        if (!std::isfinite(loss.total_value)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", scene '" +
                               sample->images.name + "' (L_shallow " + fmt(loss.values[0]) +
                               ", L_middle " + fmt(loss.values[1]) + ", L_deep " +
                               fmt(loss.values[2]) + ")");
        }
        if (config.strategy == UpdateStrategy::kUniform) {
          backward(scale(loss.total, factor));
        } else {
          apply_selective_update(loss, config.stage_weights, model, schedule, factor);
        }
        for (std::size_t k = 0; k < 3; ++k) m.train_loss[k] += loss.values[k];
        m.train_total += loss.total_value;
      }
      try {
        opt.step();
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(start / config.batch + 1));
      }
    }
    const double n = static_cast<double>(train_set.size());
    for (double& v : m.train_loss) v /= n;
    m.train_total /= n;
    m.val_mae = validation_mae(model, val_set);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double score = val_set.empty() ? 0.0 : m.val_mae[2];
    if (val_set.empty() || score < best) {
      best = score;
      result.best = model.clone();
      result.best_epoch = epoch;
    }
    result.log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  if (config.epochs == 0) result.best = model.clone();
  return result;
}

}  // namespace msfps
