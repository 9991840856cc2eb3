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

#include "msfps/params.hpp"

#include "msfps/error.hpp"

namespace msfps {

Tensor& ParamGroup::add(std::string param_name, Tensor value) {
  value.set_requires_grad(true);
  params.push_back({std::move(param_name), std::move(value)});
  return params.back().value;
}

const Tensor& ParamGroup::get(const std::string& param_name) const {
  for (const Parameter& p : params) {
    if (p.name == param_name) return p.value;
  }
  throw StructuralError("parameter group '" + name + "' has no tensor '" + param_name + "'");
}

std::size_t ParamGroup::numel() const {
  std::size_t n = 0;
  for (const Parameter& p : params) n += p.value.numel();
  return n;
}

void ParamGroup::zero_grad() {
  for (Parameter& p : params) p.value.zero_grad();
}

void LeafSet::insert(const ParamGroup& group) {
  for (const Parameter& p : group.params) members_.insert(p.value.impl());
}

LeafFilter LeafSet::filter() const {
  return [this](const TensorImpl* impl) { return contains(impl); };
}

}  // namespace msfps
