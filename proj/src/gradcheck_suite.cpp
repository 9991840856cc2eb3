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


#include "msfps/gradcheck_suite.hpp"

#include <random>

#include "msfps/photometric.hpp"
#include "msfps/training.hpp"

namespace msfps {
namespace {

class Inputs {
 public:
  explicit Inputs(std::uint64_t seed) : rng_(seed) {}

  Tensor make(Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = u(rng_);
    return Tensor::from_vector(std::move(shape), std::move(v), grad);
  }

  // Values bounded away from zero so kinks are never straddled.
  Tensor away_from_zero(Shape shape) {
    Tensor t = make(std::move(shape), 0.1, 1.0);
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); i += 2) d[i] = -d[i];
    return t;
  }

  // Distinct values: max ties are then impossible at step 1e-6.
  Tensor distinct(Shape shape) {
    Tensor t = make(std::move(shape));
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += 1e-3 * static_cast<double>(i % 7);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& options) {
  Inputs in(options.seed);
  std::vector<GradcheckCase> cases;
  const auto check = [&](std::string name, const ScalarFn& f, std::vector<Tensor> wrt,
                         const GradCheckOptions& opts) {
    cases.push_back({std::move(name), finite_diff_check(f, std::move(wrt), opts)});
  };
  const GradCheckOptions& opts = options.check;

  {
    const Tensor x = in.make({2, 2, 5, 4}), w = in.make({3, 2, 3, 3}), b = in.make({3});
    const Tensor p = in.make({2, 3, 5, 4}, -1, 1, false);
    check("conv2d 3x3", [&] { return sum(mul(conv2d(x, w, b, 1), p)); }, {x, w, b}, opts);
    const Tensor w1 = in.make({3, 2, 1, 1});
    check("conv2d 1x1", [&] { return sum(mul(conv2d(x, w1, b, 0), p)); }, {x, w1, b}, opts);
  }
  for (NormMode mode : {NormMode::kTrain, NormMode::kEval, NormMode::kBatch}) {
    const Tensor x = in.make({2, 3, 4, 4}), g = in.make({3}, 0.5, 1.5), b = in.make({3});
    const Tensor p = in.make({2, 3, 4, 4}, -1, 1, false);
    BatchNormStats st = BatchNormStats::init(3);
    st.running_mean.mutable_data()[0] = 0.2;
    st.running_var.mutable_data()[1] = 2.0;
    const char* label = mode == NormMode::kTrain ? "batch_norm train"
                        : mode == NormMode::kEval ? "batch_norm eval"
                                                  : "batch_norm batch";
    check(label,
          [&] {
            BatchNormStats scratch{st.running_mean.detach(), st.running_var.detach()};
            return sum(mul(batch_norm(x, g, b, scratch, mode), p));
          },
          {x, g, b}, opts);
  }
  {
    const Tensor x = in.make({24}, -3, 3), p = in.make({24}, -1, 1, false);
    check("gelu", [&] { return sum(mul(gelu(x), p)); }, {x}, opts);
    check("sigmoid", [&] { return sum(mul(sigmoid(x), p)); }, {x}, opts);
    const Tensor y = in.away_from_zero({24});
    check("leaky_relu", [&] { return sum(mul(leaky_relu(y, 0.1), p)); }, {y}, opts);
  }
  {
    std::vector<Tensor> set;
    for (int k = 0; k < 4; ++k) set.push_back(in.distinct({2, 3, 3}));
    const Tensor p = in.make({2, 3, 3}, -1, 1, false);
    check("set_max_pool", [&] { return sum(mul(set_max_pool(set), p)); }, set, opts);
    const Tensor stacked = in.distinct({4, 2, 3, 3});
    check("max_over_set", [&] { return sum(mul(max_over_set(stacked), p)); }, {stacked}, opts);
  }
  {
    const Tensor a = in.make({2, 2, 3, 3}), b = in.make({2, 1, 3, 3});
    const Tensor p = in.make({2, 2, 3, 3}, -1, 1, false);
    check("concat_channels / slice_channels",
          [&] { return sum(mul(slice_channels(concat_channels(a, b), 1, 3), p)); }, {a, b}, opts);
    const Tensor u = in.make({2, 3}), v = in.make({2, 3});
    const std::vector<Tensor> items{u, v};
    const Tensor q = in.make({2, 3}, -1, 1, false);
    check("stack / select / add / mul / scale",
          [&] { return sum(mul(mul(select(stack(items), 1), add(u, scale(v, 2.5))), q)); },
          {u, v}, opts);
  }
  {
    const Tensor s = in.make({3, 4, 2, 2}), m = in.make({4, 2, 2});
    const Tensor p = in.make({3, 1, 2, 2}, -1, 1, false);
    check("channel_dot", [&] { return sum(mul(channel_dot(s, m), p)); }, {s, m}, opts);
    const Tensor sb = in.make({2, 3, 2, 2}), mb = in.make({3, 2, 2});
    const Tensor gate = in.make({2, 1, 2, 2}, 0.1, 0.9);
    const Tensor pb = in.make({2, 3, 2, 2}, -1, 1, false);
    check("gated_blend", [&] { return sum(mul(gated_blend(sb, mb, gate), pb)); }, {sb, mb, gate},
          opts);
  }
  {
    const Tensor r = in.make({3, 3, 3}), p = in.make({3, 3, 3}, -1, 1, false);
    const std::vector<unsigned char> full(9, 1);
    check("normalize_pixels", [&] { return sum(mul(normalize_pixels(r, full), p)); }, {r}, opts);
    const Tensor pred = in.make({3, 2, 2}), target = in.make({3, 2, 2}, -1, 1, false);
    const std::vector<unsigned char> mask{1, 0, 1, 1};
    check("masked_cosine_loss", [&] { return masked_cosine_loss(pred, target, mask); }, {pred},
          opts);
  }
  {
    MsfModel model(options.network);
    Material mat;
    mat.albedo = {0.6, 0.5, 0.4};
    mat.model = Reflectance::kBlinnPhong;
    mat.specular_strength = 0.3;
    mat.shininess = 20.0;
    const Scene scene = make_sphere(options.scene_size, options.scene_size, mat, 1.4);
    const auto capture = render_scene(scene, sample_lights(options.lights, options.seed + 5));
    std::vector<Tensor> wrt;
    for (auto& g : model.groups()) {
      for (auto& p : g.params) wrt.push_back(p.value);
    }
    GradCheckOptions net = opts;
    net.max_entries_per_tensor = options.network_entries;
    net.seed = options.seed + 11;
    check("msf_net staged loss",
          [&] {
            ForwardOptions fwd;
            fwd.mode = NormMode::kBatch;
            const auto out = model.forward(capture.images, fwd);
            return staged_loss(out, capture.ground_truth, {0.5, 0.5, 1.0}).total;
          },
          wrt, net);
  }
  return cases;
}

}  // namespace msfps
