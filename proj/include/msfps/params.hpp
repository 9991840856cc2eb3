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

#include <string>
#include <unordered_set>
#include <vector>

#include "msfps/tensor.hpp"

namespace msfps {

struct Parameter {
  std::string name;
  Tensor value;
};

// A named set of trainable tensors. `frozen` is consulted by the training
// loop only; it never changes how the graph is built.
struct ParamGroup {
  std::string name;
  std::vector<Parameter> params;
  bool frozen = false;

  Tensor& add(std::string param_name, Tensor value);
  const Tensor& get(const std::string& param_name) const;
  std::size_t numel() const;
  void zero_grad();
};

// Identity set of the tensors owned by some groups, usable as a LeafFilter.
class LeafSet {
 public:
  LeafSet() = default;
  void insert(const ParamGroup& group);
  bool contains(const TensorImpl* impl) const { return members_.count(impl) != 0; }
  LeafFilter filter() const;

 private:
  std::unordered_set<const TensorImpl*> members_;
};

}  // namespace msfps
