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

#include "msfps/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "msfps/error.hpp"

namespace msfps {
namespace {

std::vector<std::size_t> probe_indices(std::size_t numel, const GradCheckOptions& o,
                                       std::mt19937_64& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), 0);
  if (o.max_entries_per_tensor == 0 || numel <= o.max_entries_per_tensor) return idx;
  for (std::size_t i = 0; i < o.max_entries_per_tensor; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, numel - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(o.max_entries_per_tensor);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, std::vector<Tensor> wrt,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw StructuralError("finite_diff_check: step must be positive");
  GradCheckReport report;

  for (Tensor& t : wrt) {
    if (!t.requires_grad()) t.set_requires_grad(true);
    t.clear_grad();
  }
  const Tensor base = f();
  if (base.numel() != 1) throw StructuralError("finite_diff_check: function is not scalar");
  if (!std::isfinite(base.item())) {
    report.finite = false;
    report.diagnostic = "f(x) is not finite";
    return report;
  }
  backward(base);

  std::mt19937_64 rng(options.seed);
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor& t = wrt[ti];
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i : probe_indices(t.numel(), options, rng)) {
      const double orig = values[i];
      values[i] = orig + options.step;
      const double up = f().item();
      values[i] = orig - options.step;
      const double down = f().item();
      values[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.finite = false;
        std::ostringstream os;
        os << "non-finite f at tensor " << ti << " entry " << i;
        report.diagnostic = os.str();
        return report;
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      report.entries.push_back({ti, i, a, numeric, rel});
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  if (!report.passed) {
    const auto worst = std::max_element(
        report.entries.begin(), report.entries.end(),
        [](const GradCheckEntry& x, const GradCheckEntry& y) { return x.rel_error < y.rel_error; });
    std::ostringstream os;
    os << "max relative error " << report.max_rel_error << " at tensor " << worst->tensor
       << " entry " << worst->index << " (analytic " << worst->analytic << ", numeric "
       << worst->numeric << ")";
    report.diagnostic = os.str();
  }
  return report;
}

}  // namespace msfps
