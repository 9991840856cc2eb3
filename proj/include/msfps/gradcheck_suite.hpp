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


// The finite-difference suite behind `msfps gradcheck` and the acceptance
// run: every autodiff primitive on small random inputs, then the staged loss
// of a full network on a tiny rendered scene.

#pragma once

#include <string>
#include <vector>

#include "msfps/gradcheck.hpp"
#include "msfps/msf_net.hpp"

namespace msfps {

struct GradcheckSuiteOptions {
  GradCheckOptions check{};
  MsfConfig network{};
  std::size_t scene_size = 4;
  std::size_t lights = 4;
  // Entries probed per network parameter tensor (0 = all).
  std::size_t network_entries = 4;
  std::uint64_t seed = 0;
};

struct GradcheckCase {
  std::string name;
  GradCheckReport report;
};

std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& options);

}  // namespace msfps
