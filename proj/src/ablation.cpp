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


#include "msfps/ablation.hpp"

#include <chrono>
#include <cstdio>

#include "msfps/error.hpp"

namespace msfps {

std::string AblationVariant::label() const {
  std::string s = "(" + std::to_string(id) + ")";
  if (mfe) s += " +MFE";
  if (mff) s += " +MFF";
  if (sus) s += " +SUS";
  return s;
}

void AblationVariant::validate() const {
  if (sus && !mfe) {
    std::string parts = mff ? "MFF+SUS" : "SUS";
    throw ConfigError(parts + " without MFE: the selective update strategy requires multi-stage "
                      "feature extraction");
  }
}

const std::array<AblationVariant, 6>& ablation_variants() {
  static const std::array<AblationVariant, 6> v{{
      {0, false, false, false},
      {1, true, false, false},
      {2, true, false, true},
      {3, false, true, false},
      {4, true, true, false},
      {5, true, true, true},
  }};
  return v;
}

VariantSetup variant_setup(const AblationVariant& variant, const MsfConfig& network,
                           const TrainConfig& training) {
  variant.validate();
  VariantSetup s{network, training};
  s.network.use_fusion = variant.mff;
  if (!variant.mfe) s.training.stage_weights = {0.0, 0.0, 1.0};
  s.training.strategy = variant.sus ? UpdateStrategy::kSelective : UpdateStrategy::kUniform;
  return s;
}

AblationRow score_model(MsfModel& model, const std::vector<Sample>& scenes) {
  if (scenes.empty()) throw DataError("no scenes to score");
  AblationRow row;
  for (const Sample& s : scenes) {
    const EvalReport r = evaluate(model.predict(s.images), s.ground_truth);
    row.mae_deg += r.mae_deg;
    row.err15 += r.err15;
    row.err30 += r.err30;
  }
  const double n = static_cast<double>(scenes.size());
  row.mae_deg /= n;
  row.err15 /= n;
  row.err30 /= n;
  return row;
}

AblationRow run_variant(const AblationVariant& variant, const MsfConfig& network,
                        const TrainConfig& training, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const std::vector<Sample>& test_set,
                        const VariantCallback& on_epoch) {
  const VariantSetup setup = variant_setup(variant, network, training);
  const auto t0 = std::chrono::steady_clock::now();
  MsfModel model(setup.network);
  TrainResult result = train(model, train_set, val_set, setup.training, [&](const EpochMetrics& m) {
    if (on_epoch) on_epoch(variant, m);
  });
  AblationRow row = score_model(result.best, test_set);
  row.variant = variant;
  row.best_epoch = result.best_epoch;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "# ID\tMFF\tMFE\tSUS\tMAE\terr15\terr30\n";
  const auto mark = [](bool b) { return b ? "x" : "-"; };
  char buf[256];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "(%d)\t%s\t%s\t%s\t%.6f\t%.6f\t%.6f\n", r.variant.id,
                  mark(r.variant.mff), mark(r.variant.mfe), mark(r.variant.sus), r.mae_deg,
                  r.err15, r.err30);
    out += buf;
  }
  return out;
}

}  // namespace msfps
