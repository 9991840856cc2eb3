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

// conv2d as im2col + GEMM. Every set element is lowered and multiplied on its
// own, so the result for image i never depends on the other images (the
// permutation tests rely on that down to the last bit).

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "msfps/error.hpp"
#include "msfps/tensor.hpp"
#include "tensor_internal.hpp"

namespace msfps {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, k, pad, h_out, w_out;
  bool batched;

  std::size_t in_plane() const { return c_in * h * w; }
  std::size_t out_plane() const { return c_out * h_out * w_out; }
  std::size_t rows() const { return c_in * k * k; }
  std::size_t cols() const { return h_out * w_out; }
  bool pointwise() const { return k == 1 && pad == 0; }
};

// cols[(ci*k+ky)*k+kx, y*w_out+x] = in[ci, y+ky-pad, x+kx-pad] (0 outside).
void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const std::size_t hw_out = g.cols();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const double* plane = in + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ci * g.k + ky) * g.k + kx) * hw_out;
        for (std::size_t y = 0; y < g.h_out; ++y) {
          const long sy = static_cast<long>(y + ky) - static_cast<long>(g.pad);
          double* dst = row + y * g.w_out;
          if (sy < 0 || sy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.w_out, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * g.w;
          for (std::size_t x = 0; x < g.w_out; ++x) {
            const long sx = static_cast<long>(x + kx) - static_cast<long>(g.pad);
            dst[x] = (sx < 0 || sx >= static_cast<long>(g.w)) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* in_grad) {
  const std::size_t hw_out = g.cols();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    double* plane = in_grad + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ci * g.k + ky) * g.k + kx) * hw_out;
        for (std::size_t y = 0; y < g.h_out; ++y) {
          const long sy = static_cast<long>(y + ky) - static_cast<long>(g.pad);
          if (sy < 0 || sy >= static_cast<long>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(sy) * g.w;
          const double* src = row + y * g.w_out;
          for (std::size_t x = 0; x < g.w_out; ++x) {
            const long sx = static_cast<long>(x + kx) - static_cast<long>(g.pad);
            if (sx >= 0 && sx < static_cast<long>(g.w)) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

ConvGeometry geometry(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      std::size_t padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 3 && is.size() != 4) {
    throw StructuralError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(is));
  }
  if (ws.size() != 4 || ws[2] != ws[3]) {
    throw StructuralError("conv2d: weight must be [C_out,C_in,k,k], got " + shape_str(ws));
  }
  ConvGeometry g{};
  g.batched = is.size() == 4;
  g.batch = g.batched ? is[0] : 1;
  g.c_in = is[is.size() - 3];
  g.h = is[is.size() - 2];
  g.w = is[is.size() - 1];
  g.c_out = ws[0];
  g.k = ws[2];
  g.pad = padding;
  if (ws[1] != g.c_in) {
    throw StructuralError("conv2d: input has " + std::to_string(g.c_in) +
                          " channels but weight expects " + std::to_string(ws[1]));
  }
  if (g.k % 2 == 0) throw StructuralError("conv2d: kernel size must be odd");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.c_out)) {
    throw StructuralError("conv2d: bias must be [" + std::to_string(g.c_out) + "], got " +
                          shape_str(bias.shape()));
  }
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw StructuralError("conv2d: kernel larger than padded input");
  }
  g.h_out = g.h + 2 * g.pad - g.k + 1;
  g.w_out = g.w + 2 * g.pad - g.k + 1;
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t padding) {
  const ConvGeometry g = geometry(input, weight, bias, padding);
  Shape out_shape = g.batched ? Shape{g.batch, g.c_out, g.h_out, g.w_out}
                              : Shape{g.c_out, g.h_out, g.w_out};
  std::vector<double> out(shape_numel(out_shape));

  const CMapR wmat(weight.data().data(), g.c_out, g.rows());
  MatR cols;
  if (!g.pointwise()) cols.resize(g.rows(), g.cols());
  const double* in = input.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* src = in + n * g.in_plane();
    MapR dst(out.data() + n * g.out_plane(), g.c_out, g.cols());
    if (g.pointwise()) {
      dst.noalias() = wmat * CMapR(src, g.c_in, g.cols());
    } else {
      im2col(g, src, cols.data());
      dst.noalias() = wmat * cols;
    }
    if (bias.defined()) {
      const double* b = bias.data().data();
      for (std::size_t c = 0; c < g.c_out; ++c) dst.row(c).array() += b[c];
    }
  }

  auto in_impl = input.impl_ptr();
  auto w_impl = weight.impl_ptr();
  std::vector<std::shared_ptr<TensorImpl>> parents{in_impl, w_impl};
  if (bias.defined()) parents.push_back(bias.impl_ptr());
  const TensorImpl* in_raw = in_impl.get();
  const TensorImpl* w_raw = w_impl.get();
  return detail::make_result(
      std::move(out_shape), std::move(out), "conv2d", std::move(parents),
      [g, in_raw, w_raw](std::span<const double> grad_out, std::span<const double>,
                         std::span<std::span<double>> pg) {
        std::span<double> gin = pg[0];
        std::span<double> gw = pg[1];
        std::span<double> gb = pg.size() > 2 ? pg[2] : std::span<double>();
        const CMapR wmat(w_raw->data.data(), g.c_out, g.rows());
        MatR cols;
        MatR dcols;
        if (!g.pointwise() && !gw.empty()) cols.resize(g.rows(), g.cols());
        if (!gin.empty()) dcols.resize(g.rows(), g.cols());
        for (std::size_t n = 0; n < g.batch; ++n) {
          const CMapR go(grad_out.data() + n * g.out_plane(), g.c_out, g.cols());
          const double* src = in_raw->data.data() + n * g.in_plane();
          if (!gb.empty()) {
            // scalar loop: Eigen's vectorized sum depends on the address
            const double* gp = grad_out.data() + n * g.out_plane();
            for (std::size_t c = 0; c < g.c_out; ++c) {
              double acc = 0.0;
              for (std::size_t j = 0; j < g.cols(); ++j) acc += gp[c * g.cols() + j];
              gb[c] += acc;
            }
          }
          if (!gw.empty()) {
            MapR gwm(gw.data(), g.c_out, g.rows());
            if (g.pointwise()) {
              gwm.noalias() += go * CMapR(src, g.c_in, g.cols()).transpose();
            } else {
              im2col(g, src, cols.data());
              gwm.noalias() += go * cols.transpose();
            }
          }
          if (!gin.empty()) {
            double* gi = gin.data() + n * g.in_plane();
            if (g.pointwise()) {
              MapR(gi, g.c_in, g.cols()).noalias() += wmat.transpose() * go;
            } else {
              dcols.noalias() = wmat.transpose() * go;
              col2im_add(g, dcols.data(), gi);
            }
          }
        }
      });
}

}  // namespace msfps
