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

#include <memory>
#include <string_view>
#include <vector>

#include "msfps/tensor.hpp"

namespace msfps::detail {

// Builds an op result. A node is attached only when some parent requires a
// gradient; otherwise the result is a plain constant leaf.
Tensor make_result(Shape shape, std::vector<double> values, std::string_view op,
                   std::vector<std::shared_ptr<TensorImpl>> parents, Node::BackwardFn fn);

}  // namespace msfps::detail
