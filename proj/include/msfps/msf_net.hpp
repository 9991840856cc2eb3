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


// Three-stage set network for per-pixel normal estimation.
//
// Every image of a set is encoded as 6 channels (RGB and its light direction
// broadcast over the frame) and passed through the same extractor. The
// per-image features are max-pooled over the set and regressed to a normal
// map at each stage. Between stages, a fusion block gates every feature map
// toward the pooled map and concatenates the result with the original:
//
//   f'   = BN(Conv1x1(GELU(f)))        (one transform for both branches)
//   s_i  = sigmoid(sum_c f'_i * f^M')  per pixel
//   out_i = concat((1 - s_i) f_i + s_i f^M, f_i)
//
// so the middle and deep extractors take 2C input channels. With
// residual_stages they also add f_i (the second half of that input) to their
// output.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msfps/params.hpp"
#include "msfps/types.hpp"

namespace msfps {

enum class Stage : int { kShallow = 0, kMiddle = 1, kDeep = 2 };
inline constexpr std::array<const char*, 3> kStageNames{"shallow", "middle", "deep"};

struct MsfConfig {
  std::size_t base_channels = 16;
  std::size_t extractor_depth = 3;
  std::size_t kernel_size = 3;
  bool normalize_input = true;
  // When false the fusion block is replaced by concat(f^M, f_i).
  bool use_fusion = true;
  // One fusion parameter group for both fusion sites.
  bool share_fusion = false;
  // One regression head per stage instead of a shared one.
  bool per_stage_heads = false;
  // Middle and deep extractors add their output to the previous stage's
  // per-image features.
  bool residual_stages = true;
  double leaky_slope = 0.1;
  BatchNormOptions batch_norm{};
  // Batch-norm mode of inference passes (predict, validation). kBatch
  // normalizes every image's fusion features with their own statistics, as
  // training does; kEval uses the running statistics.
  NormMode inference_norm = NormMode::kBatch;
  std::uint64_t seed = 0;

  // Throws ConfigError on C < 1, depth < 1 or an even kernel.
  void validate() const;
};

// Outputs of one stage. Tensors stay attached to the graph.
struct StageOutput {
  Tensor features;  // [N,C,H,W]
  Tensor pooled;    // [C,H,W]
  Tensor normals;   // [3,H,W], unit on the mask, zero elsewhere
  Tensor fused;     // [N,2C,H,W]; undefined at the deep stage
  Tensor gate;      // [N,1,H,W]; undefined at the deep stage or without fusion
  std::vector<unsigned char> degenerate;  // H*W, 1 where the (0,0,1) fallback was used

  NormalMap normal_map(const Mask& mask) const;
};

struct ForwardOptions {
  NormMode mode = NormMode::kBatch;
  // Test hook: replaces every fusion gate by this constant.
  std::optional<double> gate_override;
};

class MsfModel {
 public:
  explicit MsfModel(const MsfConfig& config = {});

  const MsfConfig& config() const { return config_; }
  // Copies share tensor storage; clone() copies every value.
  MsfModel clone() const;

  // Groups in a fixed order: shallow_extractor, middle_extractor,
  // deep_extractor, fusion_1, fusion_2, then the regression group(s).
  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  ParamGroup& group(const std::string& name);
  const ParamGroup& group(const std::string& name) const;
  bool has_group(const std::string& name) const;
  std::vector<std::string> group_names() const;
  // Name of the regression group used by a stage.
  std::string regression_group(Stage stage) const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Batch-norm running statistics, keyed "<group>.bn".
  std::map<std::string, BatchNormStats>& buffers() { return buffers_; }
  const std::map<std::string, BatchNormStats>& buffers() const { return buffers_; }

  // [N,6,H,W] network input, zero off the mask; normalized first when the
  // config asks for it.
  Tensor encode_input(const ImageSet& set) const;

  // Shared-weight per-image extractor of one stage.
  Tensor extract_stage(const Tensor& inputs, Stage stage) const;
  // Fusion after the shallow (site 0) or middle (site 1) stage.
  Tensor fuse(const Tensor& features, int site, const ForwardOptions& options,
              Tensor* gate_out = nullptr);
  // Regression head of a stage, normalized per pixel.
  Tensor regress_normals(const Tensor& pooled, Stage stage, const Mask& mask,
                         std::vector<unsigned char>* degenerate = nullptr) const;

  std::array<StageOutput, 3> forward(const ImageSet& set, const ForwardOptions& options);
  // Inference pass (config().inference_norm).
  std::array<StageOutput, 3> forward(const ImageSet& set);
  // Deep-stage prediction with the configured inference normalization.
  NormalMap predict(const ImageSet& set);

 private:
  Tensor regress_raw(const Tensor& pooled, Stage stage) const;
  std::string fusion_group(int site) const;

  MsfConfig config_;
  std::vector<ParamGroup> groups_;
  std::map<std::string, BatchNormStats> buffers_;
};

// Versioned binary container: config, every group's tensors and the
// batch-norm buffers, all as raw float64. Loading restores bitwise.
void save_checkpoint(const std::filesystem::path& path, const MsfModel& model);
MsfModel load_checkpoint(const std::filesystem::path& path);

}  // namespace msfps
