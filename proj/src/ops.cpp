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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "msfps/error.hpp"
#include "msfps/tensor.hpp"
#include "tensor_internal.hpp"

namespace msfps {
namespace {

using detail::make_result;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw StructuralError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
  }
}

// (channels, planes-per-set-element, pixels) view of a rank-3/4 image tensor.
struct ImageDims {
  std::size_t batch, channels, pixels;
};

ImageDims image_dims(const Tensor& x, const char* op) {
  const Shape& s = x.shape();
  if (s.size() == 3) return {1, s[0], s[1] * s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  throw StructuralError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + shape_str(s));
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, std::string_view op, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  const TensorImpl* raw = x.impl();
  return make_result(x.shape(), std::move(out), op, {x.impl_ptr()},
                     [raw, deriv](std::span<const double> g, std::span<const double> y,
                                  std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       const double* in = raw->data.data();
                       for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * deriv(in[i], y[i]);
                     });
}

}  // namespace

// ---- activations ----------------------------------------------------------

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

// ---- batch norm -----------------------------------------------------------

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, NormMode mode, const BatchNormOptions& options) {
  const ImageDims d = image_dims(input, "batch_norm");
  if (d.pixels == 0 || d.batch == 0) throw StructuralError("batch_norm: zero spatial extent");
  if (!(options.eps > 0.0)) throw StructuralError("batch_norm: eps must be positive");
  const Shape cshape{d.channels};
  if (gamma.shape() != cshape || beta.shape() != cshape || stats.running_mean.shape() != cshape ||
      stats.running_var.shape() != cshape) {
    throw StructuralError("batch_norm: affine/statistics tensors must be [" +
                          std::to_string(d.channels) + "]");
  }

  const std::size_t n_planes = d.batch * d.channels;
  const auto x = input.data();
  const auto gam = gamma.data();
  const auto bet = beta.data();
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(n_planes);

  if (mode != NormMode::kEval) {
    std::vector<double> mean_acc(d.channels, 0.0);
    std::vector<double> var_acc(d.channels, 0.0);
    const double m = static_cast<double>(d.pixels);
    for (std::size_t n = 0; n < d.batch; ++n) {
      for (std::size_t c = 0; c < d.channels; ++c) {
        const std::size_t plane = n * d.channels + c;
        const double* px = x.data() + plane * d.pixels;
        double mean = 0.0;
        for (std::size_t i = 0; i < d.pixels; ++i) mean += px[i];
        mean /= m;
        double var = 0.0;
        for (std::size_t i = 0; i < d.pixels; ++i) var += (px[i] - mean) * (px[i] - mean);
        var /= m;
        inv_std[plane] = 1.0 / std::sqrt(var + options.eps);
        double* ph = xhat.data() + plane * d.pixels;
        for (std::size_t i = 0; i < d.pixels; ++i) ph[i] = (px[i] - mean) * inv_std[plane];
        mean_acc[c] += mean;
        var_acc[c] += d.pixels > 1 ? var * m / (m - 1.0) : var;
      }
    }
    if (mode == NormMode::kTrain) {
      auto rm = stats.running_mean.mutable_data();
      auto rv = stats.running_var.mutable_data();
      const double mom = options.momentum;
      for (std::size_t c = 0; c < d.channels; ++c) {
        rm[c] = (1.0 - mom) * rm[c] + mom * mean_acc[c] / static_cast<double>(d.batch);
        rv[c] = (1.0 - mom) * rv[c] + mom * var_acc[c] / static_cast<double>(d.batch);
      }
    }
  } else {
    const auto rm = stats.running_mean.data();
    const auto rv = stats.running_var.data();
    for (std::size_t n = 0; n < d.batch; ++n) {
      for (std::size_t c = 0; c < d.channels; ++c) {
        const std::size_t plane = n * d.channels + c;
        inv_std[plane] = 1.0 / std::sqrt(rv[c] + options.eps);
        const double* px = x.data() + plane * d.pixels;
        double* ph = xhat.data() + plane * d.pixels;
        for (std::size_t i = 0; i < d.pixels; ++i) ph[i] = (px[i] - rm[c]) * inv_std[plane];
      }
    }
  }

  std::vector<double> out(x.size());
  for (std::size_t plane = 0; plane < n_planes; ++plane) {
    const std::size_t c = plane % d.channels;
    for (std::size_t i = 0; i < d.pixels; ++i) {
      const std::size_t k = plane * d.pixels + i;
      out[k] = gam[c] * xhat[k] + bet[c];
    }
  }

  const TensorImpl* gamma_raw = gamma.impl();
  const bool train = mode != NormMode::kEval;
  return make_result(
      input.shape(), std::move(out), "batch_norm",
      {input.impl_ptr(), gamma.impl_ptr(), beta.impl_ptr()},
      [d, train, gamma_raw, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          std::span<const double> g, std::span<const double>, std::span<std::span<double>> pg) {
        const double* gam = gamma_raw->data.data();
        const double m = static_cast<double>(d.pixels);
        for (std::size_t plane = 0; plane < d.batch * d.channels; ++plane) {
          const std::size_t c = plane % d.channels;
          const double* gp = g.data() + plane * d.pixels;
          const double* hp = xhat.data() + plane * d.pixels;
          double sum_g = 0.0;
          double sum_gh = 0.0;
          for (std::size_t i = 0; i < d.pixels; ++i) {
            sum_g += gp[i];
            sum_gh += gp[i] * hp[i];
          }
          if (!pg[1].empty()) pg[1][c] += sum_gh;
          if (!pg[2].empty()) pg[2][c] += sum_g;
          if (pg[0].empty()) continue;
          double* gi = pg[0].data() + plane * d.pixels;
          const double s = gam[c] * inv_std[plane];
          if (train) {
            for (std::size_t i = 0; i < d.pixels; ++i) {
              gi[i] += s * (gp[i] - sum_g / m - hp[i] * sum_gh / m);
            }
          } else {
            for (std::size_t i = 0; i < d.pixels; ++i) gi[i] += s * gp[i];
          }
        }
      });
}

// ---- set pooling ----------------------------------------------------------

Tensor set_max_pool(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw StructuralError("set_max_pool: empty input set");
  for (const Tensor& t : inputs) require_same_shape(inputs[0], t, "set_max_pool");
  const std::size_t count = inputs[0].numel();
  std::vector<double> out(inputs[0].data().begin(), inputs[0].data().end());
  std::vector<std::uint32_t> arg(count, 0);
  for (std::size_t s = 1; s < inputs.size(); ++s) {
    const auto v = inputs[s].data();
    for (std::size_t i = 0; i < count; ++i) {
      if (v[i] > out[i]) {
        out[i] = v[i];
        arg[i] = static_cast<std::uint32_t>(s);
      }
    }
  }
  std::vector<std::shared_ptr<TensorImpl>> parents;
  for (const Tensor& t : inputs) parents.push_back(t.impl_ptr());
  return make_result(inputs[0].shape(), std::move(out), "set_max_pool", std::move(parents),
                     [arg = std::move(arg)](std::span<const double> g, std::span<const double>,
                                            std::span<std::span<double>> pg) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         std::span<double> dst = pg[arg[i]];
                         if (!dst.empty()) dst[i] += g[i];
                       }
                     });
}

Tensor max_over_set(const Tensor& set) {
  const Shape& s = set.shape();
  if (s.empty() || s[0] == 0) throw StructuralError("max_over_set: empty input set");
  const Shape item(s.begin() + 1, s.end());
  const std::size_t count = shape_numel(item);
  const auto v = set.data();
  std::vector<double> out(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(count));
  std::vector<std::uint32_t> arg(count, 0);
  for (std::size_t n = 1; n < s[0]; ++n) {
    const double* src = v.data() + n * count;
    for (std::size_t i = 0; i < count; ++i) {
      if (src[i] > out[i]) {
        out[i] = src[i];
        arg[i] = static_cast<std::uint32_t>(n);
      }
    }
  }
  return make_result(item, std::move(out), "max_over_set", {set.impl_ptr()},
                     [count, arg = std::move(arg)](std::span<const double> g,
                                                   std::span<const double>,
                                                   std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (std::size_t i = 0; i < count; ++i) pg[0][arg[i] * count + i] += g[i];
                     });
}

// ---- channel plumbing -----------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if ((sa.size() != 3 && sa.size() != 4) || sa.size() != sb.size()) {
    throw StructuralError("concat_channels: incompatible ranks " + shape_str(sa) + " and " +
                          shape_str(sb));
  }
  const std::size_t ax = sa.size() - 3;
  bool ok = true;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (i != ax && sa[i] != sb[i]) ok = false;
  }
  if (!ok) {
    throw StructuralError("concat_channels: spatial/set mismatch " + shape_str(sa) + " vs " +
                          shape_str(sb));
  }
  const std::size_t batch = ax ? sa[0] : 1;
  const std::size_t plane_a = a.numel() / batch;
  const std::size_t plane_b = b.numel() / batch;
  Shape out_shape = sa;
  out_shape[ax] = sa[ax] + sb[ax];
  std::vector<double> out(a.numel() + b.numel());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t n = 0; n < batch; ++n) {
    double* dst = out.data() + n * (plane_a + plane_b);
    std::copy_n(da.data() + n * plane_a, plane_a, dst);
    std::copy_n(db.data() + n * plane_b, plane_b, dst + plane_a);
  }
  return make_result(std::move(out_shape), std::move(out), "concat_channels",
                     {a.impl_ptr(), b.impl_ptr()},
                     [batch, plane_a, plane_b](std::span<const double> g, std::span<const double>,
                                               std::span<std::span<double>> pg) {
                       for (std::size_t n = 0; n < batch; ++n) {
                         const double* src = g.data() + n * (plane_a + plane_b);
                         if (!pg[0].empty()) {
                           for (std::size_t i = 0; i < plane_a; ++i) pg[0][n * plane_a + i] += src[i];
                         }
                         if (!pg[1].empty()) {
                           for (std::size_t i = 0; i < plane_b; ++i) {
                             pg[1][n * plane_b + i] += src[plane_a + i];
                           }
                         }
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (s.size() != 3 && s.size() != 4) {
    throw StructuralError("slice_channels: expected rank 3 or 4, got " + shape_str(s));
  }
  const std::size_t ax = s.size() - 3;
  if (begin > end || end > s[ax]) throw StructuralError("slice_channels: range out of bounds");
  const std::size_t batch = ax ? s[0] : 1;
  const std::size_t pixels = s[ax + 1] * s[ax + 2];
  const std::size_t in_plane = s[ax] * pixels;
  const std::size_t out_plane = (end - begin) * pixels;
  Shape out_shape = s;
  out_shape[ax] = end - begin;
  std::vector<double> out(batch * out_plane);
  const auto v = x.data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(v.data() + n * in_plane + begin * pixels, out_plane, out.data() + n * out_plane);
  }
  const std::size_t offset = begin * pixels;
  return make_result(std::move(out_shape), std::move(out), "slice_channels", {x.impl_ptr()},
                     [batch, in_plane, out_plane, offset](std::span<const double> g,
                                                          std::span<const double>,
                                                          std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (std::size_t n = 0; n < batch; ++n) {
                         for (std::size_t i = 0; i < out_plane; ++i) {
                           pg[0][n * in_plane + offset + i] += g[n * out_plane + i];
                         }
                       }
                     });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw StructuralError("stack: empty input list");
  for (const Tensor& t : items) require_same_shape(items[0], t, "stack");
  Shape out_shape{items.size()};
  out_shape.insert(out_shape.end(), items[0].shape().begin(), items[0].shape().end());
  const std::size_t count = items[0].numel();
  std::vector<double> out(items.size() * count);
  std::vector<std::shared_ptr<TensorImpl>> parents;
  for (std::size_t n = 0; n < items.size(); ++n) {
    std::copy_n(items[n].data().data(), count, out.data() + n * count);
    parents.push_back(items[n].impl_ptr());
  }
  return make_result(std::move(out_shape), std::move(out), "stack", std::move(parents),
                     [count](std::span<const double> g, std::span<const double>,
                             std::span<std::span<double>> pg) {
                       for (std::size_t n = 0; n < pg.size(); ++n) {
                         if (pg[n].empty()) continue;
                         for (std::size_t i = 0; i < count; ++i) pg[n][i] += g[n * count + i];
                       }
                     });
}

Tensor select(const Tensor& set, std::size_t index) {
  const Shape& s = set.shape();
  if (s.empty() || index >= s[0]) throw StructuralError("select: index out of range");
  const Shape item(s.begin() + 1, s.end());
  const std::size_t count = shape_numel(item);
  const auto v = set.data();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(index * count),
                          v.begin() + static_cast<std::ptrdiff_t>((index + 1) * count));
  return make_result(item, std::move(out), "select", {set.impl_ptr()},
                     [count, index](std::span<const double> g, std::span<const double>,
                                    std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (std::size_t i = 0; i < count; ++i) pg[0][index * count + i] += g[i];
                     });
}

// ---- elementwise arithmetic -----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result(a.shape(), std::move(out), "add", {a.impl_ptr(), b.impl_ptr()},
                     [](std::span<const double> g, std::span<const double>,
                        std::span<std::span<double>> pg) {
                       for (std::size_t p = 0; p < 2; ++p) {
                         if (pg[p].empty()) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) pg[p][i] += g[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  const TensorImpl* ra = a.impl();
  const TensorImpl* rb = b.impl();
  return make_result(a.shape(), std::move(out), "mul", {a.impl_ptr(), b.impl_ptr()},
                     [ra, rb](std::span<const double> g, std::span<const double>,
                              std::span<std::span<double>> pg) {
                       if (!pg[0].empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * rb->data[i];
                       }
                       if (!pg[1].empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] += g[i] * ra->data[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * factor;
  return make_result(x.shape(), std::move(out), "scale", {x.impl_ptr()},
                     [factor](std::span<const double> g, std::span<const double>,
                              std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * factor;
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, "sum", {x.impl_ptr()},
                     [](std::span<const double> g, std::span<const double>,
                        std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (double& v : pg[0]) v += g[0];
                     });
}

// ---- fusion helpers -------------------------------------------------------

namespace {

struct SetShared {
  std::size_t batch, channels, pixels;
};

SetShared set_shared_dims(const Tensor& set, const Tensor& shared, const char* op) {
  const Shape& s = set.shape();
  const Shape& m = shared.shape();
  if (s.size() != 4 || m.size() != 3 || s[1] != m[0] || s[2] != m[1] || s[3] != m[2]) {
    throw StructuralError(std::string(op) + ": expected set [N,C,H,W] and shared [C,H,W], got " +
                          shape_str(s) + " and " + shape_str(m));
  }
  return {s[0], s[1], s[2] * s[3]};
}

}  // namespace

Tensor channel_dot(const Tensor& set, const Tensor& shared) {
  const SetShared d = set_shared_dims(set, shared, "channel_dot");
  const auto f = set.data();
  const auto m = shared.data();
  std::vector<double> out(d.batch * d.pixels, 0.0);
  for (std::size_t n = 0; n < d.batch; ++n) {
    double* dst = out.data() + n * d.pixels;
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double* fp = f.data() + (n * d.channels + c) * d.pixels;
      const double* mp = m.data() + c * d.pixels;
      for (std::size_t p = 0; p < d.pixels; ++p) dst[p] += fp[p] * mp[p];
    }
  }
  const TensorImpl* rf = set.impl();
  const TensorImpl* rm = shared.impl();
  return make_result({d.batch, 1, set.dim(2), set.dim(3)}, std::move(out), "channel_dot",
                     {set.impl_ptr(), shared.impl_ptr()},
                     [d, rf, rm](std::span<const double> g, std::span<const double>,
                                 std::span<std::span<double>> pg) {
                       for (std::size_t n = 0; n < d.batch; ++n) {
                         const double* gp = g.data() + n * d.pixels;
                         for (std::size_t c = 0; c < d.channels; ++c) {
                           const std::size_t off = (n * d.channels + c) * d.pixels;
                           if (!pg[0].empty()) {
                             for (std::size_t p = 0; p < d.pixels; ++p) {
                               pg[0][off + p] += gp[p] * rm->data[c * d.pixels + p];
                             }
                           }
                           if (!pg[1].empty()) {
                             for (std::size_t p = 0; p < d.pixels; ++p) {
                               pg[1][c * d.pixels + p] += gp[p] * rf->data[off + p];
                             }
                           }
                         }
                       }
                     });
}

Tensor gated_blend(const Tensor& set, const Tensor& shared, const Tensor& gate) {
  const SetShared d = set_shared_dims(set, shared, "gated_blend");
  if (gate.shape() != Shape{d.batch, 1, set.dim(2), set.dim(3)}) {
    throw StructuralError("gated_blend: gate must be [N,1,H,W], got " + shape_str(gate.shape()));
  }
  const auto f = set.data();
  const auto m = shared.data();
  const auto s = gate.data();
  std::vector<double> out(set.numel());
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t off = (n * d.channels + c) * d.pixels;
      for (std::size_t p = 0; p < d.pixels; ++p) {
        const double fi = f[off + p];
        const double fm = m[c * d.pixels + p];
        const double sg = s[n * d.pixels + p];
        const double v = (1.0 - sg) * fi + sg * fm;
        out[off + p] = std::clamp(v, std::min(fi, fm), std::max(fi, fm));
      }
    }
  }
  const TensorImpl* rf = set.impl();
  const TensorImpl* rm = shared.impl();
  const TensorImpl* rs = gate.impl();
  return make_result(set.shape(), std::move(out), "gated_blend",
                     {set.impl_ptr(), shared.impl_ptr(), gate.impl_ptr()},
                     [d, rf, rm, rs](std::span<const double> g, std::span<const double>,
                                     std::span<std::span<double>> pg) {
                       for (std::size_t n = 0; n < d.batch; ++n) {
                         for (std::size_t c = 0; c < d.channels; ++c) {
                           const std::size_t off = (n * d.channels + c) * d.pixels;
                           for (std::size_t p = 0; p < d.pixels; ++p) {
                             const double gv = g[off + p];
                             const double sg = rs->data[n * d.pixels + p];
                             if (!pg[0].empty()) pg[0][off + p] += gv * (1.0 - sg);
                             if (!pg[1].empty()) pg[1][c * d.pixels + p] += gv * sg;
                             if (!pg[2].empty()) {
                               pg[2][n * d.pixels + p] +=
                                   gv * (rm->data[c * d.pixels + p] - rf->data[off + p]);
                             }
                           }
                         }
                       }
                     });
}

// ---- normal maps ----------------------------------------------------------

namespace {

constexpr double kDegenerateNorm = 1e-12;

std::size_t check_normal_map(const Tensor& x, std::span<const unsigned char> mask,
                             const char* op) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != 3) {
    throw StructuralError(std::string(op) + ": expected [3,H,W], got " + shape_str(s));
  }
  const std::size_t pixels = s[1] * s[2];
  if (mask.size() != pixels) {
    throw StructuralError(std::string(op) + ": mask has " + std::to_string(mask.size()) +
                          " entries for " + std::to_string(pixels) + " pixels");
  }
  return pixels;
}

}  // namespace

Tensor normalize_pixels(const Tensor& x, std::span<const unsigned char> mask,
                        std::vector<unsigned char>* degenerate) {
  const std::size_t pixels = check_normal_map(x, mask, "normalize_pixels");
  const auto v = x.data();
  std::vector<double> out(v.size(), 0.0);
  std::vector<double> inv_norm(pixels, 0.0);
  if (degenerate) degenerate->assign(pixels, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!mask[p]) continue;
    const double a = v[p], b = v[pixels + p], c = v[2 * pixels + p];
    const double r = std::sqrt(a * a + b * b + c * c);
    if (!(r > kDegenerateNorm)) {
      out[2 * pixels + p] = 1.0;
      if (degenerate) (*degenerate)[p] = 1;
      continue;
    }
    inv_norm[p] = 1.0 / r;
    out[p] = a / r;
    out[pixels + p] = b / r;
    out[2 * pixels + p] = c / r;
  }
  return make_result(x.shape(), std::move(out), "normalize_pixels", {x.impl_ptr()},
                     [pixels, inv_norm = std::move(inv_norm)](std::span<const double> g,
                                                              std::span<const double> y,
                                                              std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (std::size_t p = 0; p < pixels; ++p) {
                         if (inv_norm[p] == 0.0) continue;
                         const double dot = g[p] * y[p] + g[pixels + p] * y[pixels + p] +
                                            g[2 * pixels + p] * y[2 * pixels + p];
                         for (std::size_t c = 0; c < 3; ++c) {
                           const std::size_t k = c * pixels + p;
                           pg[0][k] += (g[k] - y[k] * dot) * inv_norm[p];
                         }
                       }
                     });
}

Tensor masked_cosine_loss(const Tensor& pred, const Tensor& target,
                          std::span<const unsigned char> mask) {
  const std::size_t pixels = check_normal_map(pred, mask, "masked_cosine_loss");
  if (target.shape() != pred.shape()) {
    throw StructuralError("masked_cosine_loss: prediction " + shape_str(pred.shape()) +
                          " vs target " + shape_str(target.shape()));
  }
  const std::size_t valid = static_cast<std::size_t>(std::count_if(
      mask.begin(), mask.end(), [](unsigned char m) { return m != 0; }));
  if (valid == 0) throw StructuralError("masked_cosine_loss: empty mask");
  const auto a = pred.data();
  const auto b = target.data();
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!mask[p]) continue;
    const double dot = a[p] * b[p] + a[pixels + p] * b[pixels + p] + a[2 * pixels + p] * b[2 * pixels + p];
    total += 1.0 - dot;
  }
  const double inv = 1.0 / static_cast<double>(valid);
  std::vector<unsigned char> mask_copy(mask.begin(), mask.end());
  std::shared_ptr<TensorImpl> rt = target.impl_ptr();
  return make_result({}, {total * inv}, "masked_cosine_loss", {pred.impl_ptr()},
                     [pixels, inv, rt, mask_copy = std::move(mask_copy)](
                         std::span<const double> g, std::span<const double>,
                         std::span<std::span<double>> pg) {
                       if (pg[0].empty()) return;
                       for (std::size_t p = 0; p < pixels; ++p) {
                         if (!mask_copy[p]) continue;
                         for (std::size_t c = 0; c < 3; ++c) {
                           pg[0][c * pixels + p] -= g[0] * inv * rt->data[c * pixels + p];
                         }
                       }
                     });
}

}  // namespace msfps
