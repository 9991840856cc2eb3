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

// Central-difference verification of autodiff gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msfps/tensor.hpp"

namespace msfps {

// A scalar-valued function of tensors that already exist (parameters or
// inputs). It must rebuild its graph on every call and be deterministic.
using ScalarFn = std::function<Tensor()>;

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a-n| / max(|a|,|n|,floor), so
  // entries whose true derivative is ~0 are judged on absolute error.
  double floor = 1e-5;
  // When nonzero, at most this many entries per tensor are probed, chosen
  // deterministically from `seed`.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::size_t tensor;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool finite = true;
  bool passed = false;
  std::string diagnostic;
};

// Perturbs every probed entry of every tensor in `wrt` by +-step and compares
// (f(x+h)-f(x-h))/2h against the autodiff gradient. Gradients already held by
// `wrt` are overwritten. Throws StructuralError when step is not positive.
GradCheckReport finite_diff_check(const ScalarFn& f, std::vector<Tensor> wrt,
                                  const GradCheckOptions& options = {});

}  // namespace msfps
