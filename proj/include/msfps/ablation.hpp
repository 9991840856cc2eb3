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


// The six ablation variants over multi-stage extraction (MFE), multi-stage
// fusion (MFF) and the selective update strategy (SUS).
//
//   MFE off: only the deep stage is supervised (weights 0:0:1)
//   MFF off: the fusion block is replaced by concat(f^M, f_i)
//   SUS off: every loss updates every group

#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "msfps/evaluation.hpp"
#include "msfps/training.hpp"

namespace msfps {

struct AblationVariant {
  int id = 0;
  bool mfe = false;
  bool mff = false;
  bool sus = false;

  std::string label() const;
  // ConfigError when SUS is requested without MFE.
  void validate() const;
};

// Variants (0)..(5) in table order.
const std::array<AblationVariant, 6>& ablation_variants();

struct VariantSetup {
  MsfConfig network;
  TrainConfig training;
};
VariantSetup variant_setup(const AblationVariant& variant, const MsfConfig& network,
                           const TrainConfig& training);

struct AblationRow {
  AblationVariant variant;
  double mae_deg = 0.0;  // means over the test scenes
  double err15 = 0.0;
  double err30 = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

// Mean deep-stage metrics of a model over a set of scenes.
AblationRow score_model(MsfModel& model, const std::vector<Sample>& scenes);

using VariantCallback = std::function<void(const AblationVariant&, const EpochMetrics&)>;

AblationRow run_variant(const AblationVariant& variant, const MsfConfig& network,
                        const TrainConfig& training, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const std::vector<Sample>& test_set,
                        const VariantCallback& on_epoch = {});

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace msfps
