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

#include "msfps/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "msfps/error.hpp"
#include "tensor_internal.hpp"

namespace msfps {

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

const TensorImpl& checked(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) throw StructuralError("use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw StructuralError("from_vector: shape " + shape_str(shape) + " needs " +
                          std::to_string(shape_numel(shape)) + " values, got " +
                          std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw StructuralError("dim: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw StructuralError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw StructuralError("at: rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw StructuralError("at: index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  checked(impl_);
  if (impl_->node && !flag) throw StructuralError("set_requires_grad: cannot clear on a non-leaf");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return checked(impl_).node == nullptr; }

std::string_view Tensor::op_name() const {
  const TensorImpl& impl = checked(impl_);
  return impl.node ? impl.node->op : std::string_view("leaf");
}

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

std::span<double> Tensor::mutable_grad() {
  checked(impl_);
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  checked(impl_);
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
  const TensorImpl& impl = checked(impl_);
  return from_vector(impl.shape, impl.data, false);
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, std::string_view op,
                   std::vector<std::shared_ptr<TensorImpl>> parents, Node::BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const auto& p) { return p && p->requires_grad; });
  if (any) {
    impl->requires_grad = true;
    impl->node = std::make_unique<Node>(Node{op, std::move(parents), std::move(fn)});
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

namespace {

// Post-order (parents first) over the requires_grad subgraph rooted at root.
std::vector<TensorImpl*> topo_order(TensorImpl* root,
                                    std::unordered_map<const TensorImpl*, std::size_t>& index) {
  std::vector<TensorImpl*> order;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  std::unordered_map<const TensorImpl*, bool> seen;
  stack.emplace_back(root, 0);
  seen[root] = true;
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->parents.size()) {
      TensorImpl* parent = impl->node->parents[next++].get();
      if (parent && parent->requires_grad && !seen[parent]) {
        seen[parent] = true;
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    index[impl] = order.size();
    order.push_back(impl);
    stack.pop_back();
  }
  return order;
}

}  // namespace

void backward(const Tensor& loss, const LeafFilter& filter) {
  if (!loss.defined()) throw StructuralError("backward: undefined loss tensor");
  if (loss.numel() != 1) {
    throw StructuralError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::unordered_map<const TensorImpl*, std::size_t> index;
  const std::vector<TensorImpl*> order = topo_order(loss.impl(), index);

  std::vector<char> needs(order.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const TensorImpl* impl = order[i];
    if (!impl->node) {
      needs[i] = impl->requires_grad && (!filter || filter(impl));
      continue;
    }
    for (const auto& p : impl->node->parents) {
      if (p && p->requires_grad && needs[index.at(p.get())]) {
        needs[i] = 1;
        break;
      }
    }
  }
  const std::size_t root = order.size() - 1;
  if (!needs[root]) return;

  TensorImpl* root_impl = order[root];
  if (!root_impl->node) {
    if (root_impl->grad.empty()) root_impl->grad.assign(1, 0.0);
    root_impl->grad[0] += 1.0;
    return;
  }

  std::vector<std::vector<double>> grads(order.size());
  grads[root].assign(1, 1.0);
  std::vector<std::span<double>> spans;
  for (std::size_t i = order.size(); i-- > 0;) {
    TensorImpl* impl = order[i];
    if (!impl->node || !needs[i] || grads[i].empty()) continue;
    spans.clear();
    for (const auto& p : impl->node->parents) {
      std::span<double> s;
      if (p && p->requires_grad) {
        const std::size_t j = index.at(p.get());
        if (needs[j]) {
          if (!p->node) {
            if (p->grad.empty()) p->grad.assign(p->data.size(), 0.0);
            s = p->grad;
          } else {
            if (grads[j].empty()) grads[j].assign(p->data.size(), 0.0);
            s = grads[j];
          }
        }
      }
      spans.push_back(s);
    }
    impl->node->backward(grads[i], impl->data, spans);
    std::vector<double>().swap(grads[i]);
  }
}

std::vector<const TensorImpl*> reachable_leaves(const Tensor& root) {
  std::vector<const TensorImpl*> leaves;
  if (!root.defined() || !root.requires_grad()) return leaves;
  std::unordered_map<const TensorImpl*, std::size_t> index;
  for (const TensorImpl* impl : topo_order(root.impl(), index)) {
    if (!impl->node) leaves.push_back(impl);
  }
  return leaves;
}

BatchNormStats BatchNormStats::init(std::size_t channels) {
  return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
}

}  // namespace msfps
