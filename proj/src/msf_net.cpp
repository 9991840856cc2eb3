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


#include "msfps/msf_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "msfps/error.hpp"
#include "msfps/preprocess.hpp"

namespace msfps {
namespace {

constexpr std::size_t kInputChannels = 6;
const char* const kGroupNames[] = {"shallow_extractor", "middle_extractor", "deep_extractor",
                                   "fusion_1", "fusion_2"};

Tensor kaiming(std::mt19937_64& rng, std::size_t out, std::size_t in, std::size_t k,
               double slope) {
  const double fan_in = static_cast<double>(in * k * k);
  const double std = std::sqrt(2.0 / (1.0 + slope * slope) / fan_in);
  std::normal_distribution<double> gauss(0.0, std);
  std::vector<double> w(out * in * k * k);
  for (double& v : w) v = gauss(rng);
  return Tensor::from_vector({out, in, k, k}, std::move(w));
}

void add_conv(ParamGroup& g, const std::string& name, std::mt19937_64& rng, std::size_t out,
              std::size_t in, std::size_t k, double slope) {
  g.add(name + ".weight", kaiming(rng, out, in, k, slope));
  g.add(name + ".bias", Tensor::zeros({out}));
}

Tensor conv(const ParamGroup& g, const std::string& name, const Tensor& x) {
  const Tensor& w = g.get(name + ".weight");
  return conv2d(x, w, g.get(name + ".bias"), w.dim(2) / 2);
}

}  // namespace

void MsfConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (extractor_depth < 1) throw ConfigError("extractor_depth must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (!(batch_norm.eps > 0.0)) throw ConfigError("batch-norm eps must be positive");
  if (!(batch_norm.momentum >= 0.0 && batch_norm.momentum <= 1.0)) {
    throw ConfigError("batch-norm momentum must lie in [0,1]");
  }
}

NormalMap StageOutput::normal_map(const Mask& mask) const {
  return {normals.detach(), mask};
}

MsfModel::MsfModel(const MsfConfig& config) : config_(config) {
  config_.validate();
  const std::size_t C = config_.base_channels;
  const std::size_t k = config_.kernel_size;
  const double a = config_.leaky_slope;
  std::mt19937_64 rng(config_.seed);

  for (const char* name : kGroupNames) groups_.push_back(ParamGroup{name, {}, false});
  for (int s = 0; s < 3; ++s) {
    ParamGroup& g = groups_[static_cast<std::size_t>(s)];
    std::size_t in = s == 0 ? kInputChannels : 2 * C;
    for (std::size_t l = 0; l < config_.extractor_depth; ++l) {
      add_conv(g, "conv" + std::to_string(l + 1), rng, C, in, k, a);
      in = C;
    }
  }
  if (config_.use_fusion) {
    for (int site = 0; site < (config_.share_fusion ? 1 : 2); ++site) {
      ParamGroup& g = groups_[3 + static_cast<std::size_t>(site)];
      add_conv(g, "conv", rng, C, C, 1, 0.0);
      g.add("bn.gamma", Tensor::full({C}, 1.0));
      g.add("bn.beta", Tensor::zeros({C}));
      buffers_.emplace(g.name + ".bn", BatchNormStats::init(C));
    }
  }
  const auto add_head = [&](const std::string& name) {
    ParamGroup g{name, {}, false};
    add_conv(g, "conv1", rng, C, C, 3, a);
    add_conv(g, "conv2", rng, C, C, 3, a);
    add_conv(g, "out", rng, 3, C, 1, 1.0);
    groups_.push_back(std::move(g));
  };
  if (config_.per_stage_heads) {
    for (const char* s : kStageNames) add_head(std::string("regression_") + s);
  } else {
    add_head("regression");
  }
}

MsfModel MsfModel::clone() const {
  MsfModel out(*this);
  for (auto& g : out.groups_) {
    for (auto& p : g.params) {
      Tensor copy = p.value.detach();
      copy.set_requires_grad(true);
      p.value = copy;
    }
  }
  for (auto& [name, stats] : out.buffers_) {
    stats.running_mean = stats.running_mean.detach();
    stats.running_var = stats.running_var.detach();
  }
  return out;
}

ParamGroup& MsfModel::group(const std::string& name) {
  for (auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ConfigError("unknown parameter group '" + name + "'");
}

const ParamGroup& MsfModel::group(const std::string& name) const {
  return const_cast<MsfModel*>(this)->group(name);
}

bool MsfModel::has_group(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return true;
  }
  return false;
}

std::vector<std::string> MsfModel::group_names() const {
  std::vector<std::string> out;
  for (const auto& g : groups_) out.push_back(g.name);
  return out;
}

std::string MsfModel::regression_group(Stage stage) const {
  if (!config_.per_stage_heads) return "regression";
  return std::string("regression_") + kStageNames[static_cast<std::size_t>(stage)];
}

std::string MsfModel::fusion_group(int site) const {
  return config_.share_fusion || site == 0 ? "fusion_1" : "fusion_2";
}

std::size_t MsfModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.numel();
  return n;
}

void MsfModel::zero_grad() {
  for (auto& g : groups_) g.zero_grad();
}

Tensor MsfModel::encode_input(const ImageSet& set) const {
  set.validate();
  const ImageSet src = config_.normalize_input ? normalize_observations(set) : set;
  const std::size_t n = set.count(), h = set.height(), w = set.width(), pixels = h * w;
  std::vector<double> x(n * kInputChannels * pixels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto img = src.images[i].data();
    const Eigen::Vector3d& l = set.lights[i].direction;
    double* dst = x.data() + i * kInputChannels * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (!set.mask.valid[p]) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        dst[c * pixels + p] = img[c * pixels + p];
        dst[(3 + c) * pixels + p] = l[static_cast<int>(c)];
      }
    }
  }
  return Tensor::from_vector({n, kInputChannels, h, w}, std::move(x));
}

Tensor MsfModel::extract_stage(const Tensor& inputs, Stage stage) const {
  const ParamGroup& g = groups_[static_cast<std::size_t>(stage)];
  const std::size_t expected = stage == Stage::kShallow ? kInputChannels : 2 * config_.base_channels;
  if (inputs.rank() != 4 || inputs.dim(1) != expected) {
    throw StructuralError("extract_stage(" + std::string(kStageNames[static_cast<std::size_t>(stage)]) +
                          "): expected [N," + std::to_string(expected) + ",H,W] input, got " +
                          shape_str(inputs.shape()));
  }
  Tensor x = inputs;
  for (std::size_t l = 0; l < config_.extractor_depth; ++l) {
    x = leaky_relu(conv(g, "conv" + std::to_string(l + 1), x), config_.leaky_slope);
  }
  if (stage != Stage::kShallow && config_.residual_stages) {
    // refine the previous stage's own features (second half of the fused input)
    x = add(x, slice_channels(inputs, config_.base_channels, 2 * config_.base_channels));
  }
  return x;
}

Tensor MsfModel::fuse(const Tensor& features, int site, const ForwardOptions& options,
                      Tensor* gate_out) {
  if (features.rank() != 4 || features.dim(0) == 0) {
    throw StructuralError("fuse: expected a nonempty [N,C,H,W] feature set, got " +
                          shape_str(features.shape()));
  }
  const Tensor pooled = max_over_set(features);
  const Shape gate_shape{features.dim(0), 1, features.dim(2), features.dim(3)};
  Tensor gate;
  if (options.gate_override) {
    gate = Tensor::full(gate_shape, *options.gate_override);
  } else if (!config_.use_fusion) {
    gate = Tensor::full(gate_shape, 1.0);
  } else {
    const std::string name = fusion_group(site);
    const ParamGroup& g = group(name);
    BatchNormStats& stats = buffers_.at(name + ".bn");
    const auto transform = [&](const Tensor& f) {
      return batch_norm(conv(g, "conv", gelu(f)), g.get("bn.gamma"), g.get("bn.beta"), stats,
                        options.mode, config_.batch_norm);
    };
    gate = sigmoid(channel_dot(transform(features), transform(pooled)));
  }
  if (gate_out) *gate_out = gate;
  return concat_channels(gated_blend(features, pooled, gate), features);
}

Tensor MsfModel::regress_raw(const Tensor& pooled, Stage stage) const {
  const ParamGroup& g = group(regression_group(stage));
  Tensor x = leaky_relu(conv(g, "conv1", pooled), config_.leaky_slope);
  x = leaky_relu(conv(g, "conv2", x), config_.leaky_slope);
  return conv(g, "out", x);
}

Tensor MsfModel::regress_normals(const Tensor& pooled, Stage stage, const Mask& mask,
                                 std::vector<unsigned char>* degenerate) const {
  return normalize_pixels(regress_raw(pooled, stage), mask.valid, degenerate);
}

std::array<StageOutput, 3> MsfModel::forward(const ImageSet& set, const ForwardOptions& options) {
  std::array<StageOutput, 3> out;
  Tensor x = encode_input(set);
  for (int s = 0; s < 3; ++s) {
    const Stage stage = static_cast<Stage>(s);
    StageOutput& o = out[static_cast<std::size_t>(s)];
    o.features = extract_stage(x, stage);
    o.pooled = max_over_set(o.features);
    o.normals = regress_normals(o.pooled, stage, set.mask, &o.degenerate);
    if (s < 2) {
      Tensor gate;
      o.fused = fuse(o.features, s, options, &gate);
      if (config_.use_fusion || options.gate_override) o.gate = gate;
      x = o.fused;
    }
  }
  return out;
}

std::array<StageOutput, 3> MsfModel::forward(const ImageSet& set) {
  ForwardOptions opts;
  opts.mode = config_.inference_norm;
  return forward(set, opts);
}

NormalMap MsfModel::predict(const ImageSet& set) {
  const auto out = forward(set);
  return out[2].normal_map(set.mask);
}

// ---- checkpoint ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'S', 'F', 'P', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError(path.string() + ": cannot open for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u64(t.rank());
    for (std::size_t d : t.shape()) u64(d);
    bytes(t.data().data(), t.numel() * sizeof(double));
  }
  void finish() {
    out_.flush();
    if (!out_) throw DataError(path_.string() + ": write failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError(path.string() + ": cannot open checkpoint");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) fail("truncated checkpoint");
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1u << 20)) fail("corrupt string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const std::uint64_t rank = u64();
    if (rank > 8) fail("corrupt tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    const std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 32)) fail("corrupt tensor size");
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return Tensor::from_vector(std::move(shape), std::move(v));
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string() + ": " + what);
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MsfModel& model) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u64(kVersion);
  const MsfConfig& c = model.config();
  w.u64(c.base_channels);
  w.u64(c.extractor_depth);
  w.u64(c.kernel_size);
  w.u64(c.normalize_input);
  w.u64(c.use_fusion);
  w.u64(c.share_fusion);
  w.u64(c.per_stage_heads);
  w.u64(c.residual_stages);
  w.f64(c.leaky_slope);
  w.f64(c.batch_norm.momentum);
  w.f64(c.batch_norm.eps);
  w.u64(static_cast<std::uint64_t>(c.inference_norm));
  w.u64(c.seed);
  w.u64(model.groups().size());
  for (const auto& g : model.groups()) {
    w.str(g.name);
    w.u64(g.params.size());
    for (const auto& p : g.params) {
      w.str(p.name);
      w.tensor(p.value);
    }
  }
  w.u64(model.buffers().size());
  for (const auto& [name, stats] : model.buffers()) {
    w.str(name);
    w.tensor(stats.running_mean);
    w.tensor(stats.running_var);
  }
  w.finish();
}

MsfModel load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("not an msfps checkpoint");
  const std::uint64_t version = r.u64();
  if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  MsfConfig c;
  c.base_channels = r.u64();
  c.extractor_depth = r.u64();
  c.kernel_size = r.u64();
  c.normalize_input = r.u64() != 0;
  c.use_fusion = r.u64() != 0;
  c.share_fusion = r.u64() != 0;
  c.per_stage_heads = r.u64() != 0;
  c.residual_stages = r.u64() != 0;
  c.leaky_slope = r.f64();
  c.batch_norm.momentum = r.f64();
  c.batch_norm.eps = r.f64();
  const std::uint64_t norm = r.u64();
  if (norm > static_cast<std::uint64_t>(NormMode::kBatch)) r.fail("corrupt inference mode");
  c.inference_norm = static_cast<NormMode>(norm);
  c.seed = r.u64();
  MsfModel model(c);

  const std::uint64_t n_groups = r.u64();
  if (n_groups != model.groups().size()) r.fail("group count does not match the stored config");
  for (auto& g : model.groups()) {
    if (r.str() != g.name) r.fail("group order does not match the stored config");
    if (r.u64() != g.params.size()) r.fail("group '" + g.name + "' has the wrong tensor count");
    for (auto& p : g.params) {
      if (r.str() != p.name) r.fail("unexpected tensor in group '" + g.name + "'");
      Tensor t = r.tensor();
      if (t.shape() != p.value.shape()) r.fail("shape mismatch for " + g.name + "." + p.name);
      std::copy(t.data().begin(), t.data().end(), p.value.mutable_data().begin());
    }
  }
  const std::uint64_t n_buffers = r.u64();
  if (n_buffers != model.buffers().size()) r.fail("buffer count does not match the stored config");
  for (std::uint64_t i = 0; i < n_buffers; ++i) {
    const std::string name = r.str();
    auto it = model.buffers().find(name);
    if (it == model.buffers().end()) r.fail("unknown buffer '" + name + "'");
    Tensor mean = r.tensor();
    Tensor var = r.tensor();
    if (mean.shape() != it->second.running_mean.shape() ||
        var.shape() != it->second.running_var.shape()) {
      r.fail("shape mismatch for buffer '" + name + "'");
    }
    std::copy(mean.data().begin(), mean.data().end(), it->second.running_mean.mutable_data().begin());
    std::copy(var.data().begin(), var.data().end(), it->second.running_var.mutable_data().begin());
  }
  if (!r.at_end()) r.fail("trailing bytes after checkpoint payload");
  return model;
}

}  // namespace msfps
