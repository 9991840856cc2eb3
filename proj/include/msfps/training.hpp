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


// Staged cosine loss, per-loss gradient masks and the optimization loop.
//
// Each stage prediction N^s is supervised with L_s = mean(1 - N^s . N).
// Under the selective strategy every L_s may only write gradients into the
// parameter groups listed for it in a FreezeSchedule; features are never
// detached, so the deep loss still reaches the shallow extractor.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "msfps/msf_net.hpp"
#include "msfps/types.hpp"

namespace msfps {

enum class UpdateStrategy { kSelective, kUniform };
enum class OptimizerKind { kAdam, kSgd };

struct FreezeSchedule {
  // Groups whose gradients stage loss s may write.
  std::array<std::set<std::string>, 3> touch;

  // shallow: {shallow_extractor, regression}; middle: {middle_extractor,
  // fusion_1, regression}; deep: every group.
  static FreezeSchedule selective(const MsfModel& model);
  static FreezeSchedule uniform(const MsfModel& model);

  // ConfigError for unknown group names, a loss that may not update its own
  // extractor or may update a later one, or a deep loss that does not
  // reach every extractor. Together these make extractor_reach nested.
  void validate(const MsfModel& model) const;
  // Extractor groups updated by the losses of stages 0..stage combined:
  // {shallow} < {shallow, middle} < {shallow, middle, deep} by default.
  std::set<std::string> extractor_reach(int stage) const;
};

struct TrainConfig {
  std::array<double, 3> stage_weights{0.5, 0.5, 1.0};
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch = 1;  // scenes per optimizer step
  std::uint64_t seed = 0;
  UpdateStrategy strategy = UpdateStrategy::kSelective;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 10.0;  // global gradient norm; <= 0 disables
  // Random 90-degree rotations / mirror flips of every training scene.
  bool augment = true;

  // ConfigError on negative weights, non-positive lr (lr = 0 is allowed
  // only as an explicit no-op probe), zero batch, or all-zero weights.
  void validate() const;
};

struct Sample {
  ImageSet images;
  NormalMap ground_truth;
};

Tensor cosine_loss(const Tensor& pred, const NormalMap& gt);

struct StagedLoss {
  std::array<Tensor, 3> stage;
  Tensor total;
  std::array<double, 3> values{};
  double total_value = 0.0;
};

StagedLoss staged_loss(const std::array<StageOutput, 3>& outputs, const NormalMap& gt,
                       const std::array<double, 3>& weights);

// Accumulates sum_s scale * w_s * mask_s(grad L_s) into the parameter
// gradients. Uniform strategy is one unmasked pass over the weighted total.
// Returns the number of backward passes run.
int apply_selective_update(const StagedLoss& losses, const std::array<double, 3>& weights,
                           MsfModel& model, const FreezeSchedule& schedule,
                           double scale = 1.0);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::array<double, 3> train_loss{};
  double train_total = 0.0;
  std::array<double, 3> val_mae{};  // NaN without a validation set
  double seconds = 0.0;
};

struct TrainResult {
  MsfModel best;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> log;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Mean over scenes of the per-scene MAE of each stage (inference pass).
std::array<double, 3> validation_mae(MsfModel& model, const std::vector<Sample>& val);

// Trains `model` in place and returns a copy of the best epoch by deep
// validation MAE (the last epoch without validation data). Throws
// NumericalError when a loss becomes non-finite.
TrainResult train(MsfModel& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Tab-separated metrics log, one line per epoch.
std::string format_metrics_line(const EpochMetrics& m);
std::string metrics_header();

// Rotates (k quarter turns counterclockwise) and optionally mirrors a
// sample, transforming images, mask, lights and normals consistently.
Sample transform_sample(const Sample& s, int quarter_turns, bool mirror);

}  // namespace msfps
