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


#include "msfps/l2_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "msfps/error.hpp"

namespace msfps {
namespace {

constexpr double kCholeskyMaxCondition = 1e8;
constexpr double kMinAlbedo = 1e-12;

using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

std::string cond_str(double c) {
  std::ostringstream ss;
  ss.precision(4);
  ss << c;
  return ss.str();
}

// Solves min |L g - b| for several right-hand sides (columns of B).
class LeastSquares {
 public:
  explicit LeastSquares(const MatX3& L) : L_(L) {
    Eigen::JacobiSVD<MatX3> svd(L, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    cond_ = s[2] > 0.0 ? s[0] / s[2] : std::numeric_limits<double>::infinity();
    const double tol = static_cast<double>(L.rows()) * std::numeric_limits<double>::epsilon() * s[0];
    full_rank_ = s[2] > tol;
    if (cond_ <= kCholeskyMaxCondition) {
      llt_.compute(L.transpose() * L);
      use_llt_ = llt_.info() == Eigen::Success;
    }
    if (!use_llt_) svd_ = std::move(svd);
  }

  bool full_rank() const { return full_rank_; }
  double condition() const { return cond_; }

  Eigen::Vector3d solve(const Eigen::VectorXd& b) const {
    if (use_llt_) return llt_.solve(L_.transpose() * b);
    return svd_.solve(b);
  }

 private:
  MatX3 L_;
  double cond_ = 0.0;
  bool full_rank_ = false;
  bool use_llt_ = false;
  Eigen::LLT<Eigen::Matrix3d> llt_;
  Eigen::JacobiSVD<MatX3> svd_;
};

}  // namespace

L2Solution solve_l2(const ImageSet& set, const L2Options& options) {
  set.validate();
  const std::size_t n = set.count();
  if (n < 3) {
    throw DataError("need ≥ 3 images for least-squares photometric stereo (got " +
                    std::to_string(n) + ")");
  }
  MatX3 L(static_cast<Eigen::Index>(n), 3);
  for (std::size_t k = 0; k < n; ++k) L.row(static_cast<Eigen::Index>(k)) = set.lights[k].direction;
  const LeastSquares full(L);
  if (!full.full_rank()) {
    throw DataError("light matrix is rank deficient (condition number " +
                    cond_str(full.condition()) + ")");
  }

  const std::size_t h = set.height(), w = set.width(), pixels = h * w;
  L2Solution out;
  out.normals = NormalMap::zeros(set.mask);
  out.albedo = Tensor::zeros({3, h, w});
  out.residual = Tensor::zeros({h, w});
  out.condition_number = full.condition();
  auto albedo = out.albedo.mutable_data();
  auto residual = out.residual.mutable_data();

  std::vector<const double*> img(n);
  for (std::size_t k = 0; k < n; ++k) img[k] = set.images[k].data().data();

  const std::size_t drop = options.trim ? n / 4 : 0;
  const std::size_t keep = n - drop;
  Eigen::VectorXd gray(static_cast<Eigen::Index>(n));
  std::vector<std::size_t> rows(n);

  for (std::size_t p = 0; p < pixels; ++p) {
    if (!set.mask.valid[p]) continue;
    for (std::size_t k = 0; k < n; ++k) {
      gray[static_cast<Eigen::Index>(k)] =
          (img[k][p] + img[k][pixels + p] + img[k][2 * pixels + p]) / 3.0;
    }
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Eigen::Vector3d g;
    MatX3 Lp = L;
    Eigen::VectorXd b = gray;
    if (drop == 0) {
      g = full.solve(gray);
    } else {
      // stable sort keeps the choice deterministic under equal intensities
      std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t c) {
        return gray[static_cast<Eigen::Index>(a)] > gray[static_cast<Eigen::Index>(c)];
      });
      rows.resize(keep);
      std::sort(rows.begin(), rows.end());
      Lp.resize(static_cast<Eigen::Index>(keep), 3);
      b.resize(static_cast<Eigen::Index>(keep));
      for (std::size_t r = 0; r < keep; ++r) {
        Lp.row(static_cast<Eigen::Index>(r)) = L.row(static_cast<Eigen::Index>(rows[r]));
        b[static_cast<Eigen::Index>(r)] = gray[static_cast<Eigen::Index>(rows[r])];
      }
      const LeastSquares local(Lp);
      if (!local.full_rank()) {
        out.normals.mask.valid[p] = 0;
        continue;
      }
      g = local.solve(b);
    }

    const Eigen::VectorXd r = Lp * g - b;
    residual[p] = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
    const double norm = g.norm();
    if (!(norm >= kMinAlbedo)) {
      out.normals.mask.valid[p] = 0;
      continue;
    }
    const Eigen::Vector3d normal = g / norm;
    out.normals.set(p, normal);

    // per-channel refit against the shading of the recovered normal
    const Eigen::VectorXd s = (Lp * normal).cwiseMax(0.0);
    const double ss = s.squaredNorm();
    for (std::size_t c = 0; c < 3; ++c) {
      double sb = 0.0;
      for (std::size_t r2 = 0; r2 < rows.size(); ++r2) {
        sb += s[static_cast<Eigen::Index>(r2)] * img[rows[r2]][c * pixels + p];
      }
      albedo[c * pixels + p] = ss > 0.0 ? std::max(0.0, sb / ss) : 0.0;
    }
  }
  return out;
}

}  // namespace msfps
