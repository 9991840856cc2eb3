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

#pragma once

#include <stdexcept>
#include <string>

namespace msfps {

// Shape or arity violations inside the library (wrong channel count, empty
// set, non-scalar loss, ...).
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad or inconsistent input data: unreadable files, count mismatches,
// too few images, rank-deficient lighting.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numerical checks.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: unknown parameter groups, forbidden ablation
// combinations, out-of-range settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace msfps
