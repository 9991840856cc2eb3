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

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operations that consume a
// tensor with requires_grad() record a backprop node referencing their
// inputs, so the graph is built implicitly while the forward pass runs and
// torn down when the last handle goes away. A graph and its tensors belong to
// one thread at a time.
//
// Image sets are carried as rank-4 tensors [N,C,H,W]: element i along the
// leading axis is the feature map of image i. Per-image operators (conv2d,
// batch_norm, activations) never mix elements of that axis.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace msfps {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

struct TensorImpl;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of the values. Intended for leaves (parameters, inputs);
  // mutating a tensor that already feeds a recorded graph invalidates the
  // gradients computed from that graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  std::string_view op_name() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  // New leaf holding a copy of the values; no graph history.
  Tensor detach() const;

  TensorImpl* impl() const noexcept { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const noexcept { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Backprop record attached to a non-leaf tensor. The backward closure
// receives the upstream gradient, the node's own forward values and one
// writable span per parent; a span is empty when that parent does not need a
// gradient in the current pass. Closures accumulate (+=) into the spans.
struct Node {
  using BackwardFn = std::function<void(std::span<const double> grad_out,
                                        std::span<const double> out_values,
                                        std::span<std::span<double>> parent_grads)>;
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulated
  bool requires_grad = false;
  std::unique_ptr<Node> node;
};

// Selects the leaves a backward pass may write into. Leaves rejected by the
// filter receive nothing, and nodes from which no accepted leaf is reachable
// are skipped entirely.
using LeafFilter = std::function<bool(const TensorImpl*)>;

// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad
// that passes the filter (all of them when the filter is empty). Non-leaf
// gradients live only for the duration of the pass, so the same graph may be
// traversed repeatedly with different filters.
void backward(const Tensor& loss, const LeafFilter& filter = {});

// Leaves with requires_grad reachable from the given tensor, in a
// deterministic order.
std::vector<const TensorImpl*> reachable_leaves(const Tensor& root);

// Per-channel running statistics for batch_norm.
struct BatchNormStats {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  static BatchNormStats init(std::size_t channels);
};

// kTrain: normalize with the input's own statistics and update the running
// ones. kEval: normalize with the running statistics. kBatch: the input's own
// statistics, running statistics left untouched.
enum class NormMode { kTrain, kEval, kBatch };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

// ---- Primitives ----------------------------------------------------------

// Stride-1 cross-correlation. input is [C_in,H,W] or a set [N,C_in,H,W];
// weight is [C_out,C_in,k,k]; bias is [C_out] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t padding);

// Normalizes every channel by its mean/variance over (H,W). For a set
// [N,C,H,W] each element is normalized with its own statistics and the
// running statistics receive the average over the set.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, NormMode mode,
                  const BatchNormOptions& options = {});

// x * Phi(x) with the exact erf form.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);

// Elementwise maximum across a set of equally shaped tensors. Gradient goes
// to the first maximal element at every position.
Tensor set_max_pool(std::span<const Tensor> inputs);
// Same reduction over the leading axis of a stacked set [N,...] -> [...].
Tensor max_over_set(const Tensor& set);

// Channel concatenation: [C1,H,W]+[C2,H,W] or [N,C1,H,W]+[N,C2,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [begin,end) of a rank-3 or rank-4 tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

// Stacks equally shaped tensors along a new leading axis, and the inverse.
Tensor stack(std::span<const Tensor> items);
Tensor select(const Tensor& set, std::size_t index);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);

// Channel dot product of every set element with a shared map:
// [N,C,H,W] x [C,H,W] -> [N,1,H,W].
Tensor channel_dot(const Tensor& set, const Tensor& shared);

// (1 - gate) * set + gate * shared, with gate [N,1,H,W] broadcast over
// channels and shared [C,H,W] broadcast over the set. The result is clamped
// to the interval spanned by the two blended values, which makes gate 0, gate
// 1 and set == shared reproduce their closed forms exactly.
Tensor gated_blend(const Tensor& set, const Tensor& shared, const Tensor& gate);

// Per-pixel L2 normalization of a [3,H,W] tensor. Masked-out pixels become
// zero; masked pixels whose vector is (numerically) zero become (0,0,1) and
// are reported in `degenerate` (H*W flags) when non-null.
Tensor normalize_pixels(const Tensor& x, std::span<const unsigned char> mask,
                        std::vector<unsigned char>* degenerate = nullptr);

// mean over masked pixels of (1 - <pred, target>) for [3,H,W] maps. Only
// pred participates in autodiff.
Tensor masked_cosine_loss(const Tensor& pred, const Tensor& target,
                          std::span<const unsigned char> mask);

}  // namespace msfps
