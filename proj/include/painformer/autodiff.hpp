// Copyright 2026 The PainFormer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "painformer/fft.hpp"
#include "painformer/rng.hpp"
#include "painformer/tensor.hpp"

// Reverse-mode differentiation over a linear recording of operations.
namespace painformer::ad {

class Tape;

// Handle to one recorded value on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Complex value stored as one packed real node of shape [2, ...]: the first
// half holds real parts, the second half imaginary parts.
struct ComplexVar {
  Var packed;

  Shape shape() const;
  Tensor real_value() const;
  Tensor imag_value() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(DType dtype = DType::f32) : dtype_(dtype) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DType dtype() const { return dtype_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  Var variable(Tensor value);
  // `backward` is dropped when no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  // Adjoint from the last backward(); zeros for values the output does not use.
  Tensor grad(Var v) const;
  // Zero-initialized accumulation buffer, or nullptr if `v` needs no gradient.
  Tensor* grad_slot(Var v);

  // Seeds d(output)/d(output) = 1; output must hold exactly one scalar.
  void backward(Var output);
  void backward(Var output, const Tensor& seed);

  // Node ids whose backward rule ran, in visiting order.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
  DType dtype_;
};

// Elementwise and structural ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// bias broadcast over the last axis of x.
Var add_bias(Var x, Var bias);
Var reshape(Var x, Shape shape);
Var sum(Var x);
Var exp(Var x);
// Entry `index` of a flattened value as a [1] tensor.
Var element(Var x, std::size_t index);
// Scalars ([1] tensors) stacked into one [n] vector.
Var stack(std::span<const Var> scalars);
// Flattened concatenation into one vector.
Var concat(std::span<const Var> parts);
// Row-wise concatenation of [Ri x C] matrices.
Var concat_rows(std::span<const Var> parts);
// Rows [begin, begin + count) of a matrix.
Var slice_rows(Var x, std::size_t begin, std::size_t count);

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
// x: [..., in], weight: [in, out], bias: [out] or invalid Var for none.
Var linear(Var x, Var weight, Var bias);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
// [R x C] -> [C] column means.
Var mean_rows(Var x);

// Neural primitives.
Var softmax_rows(Var x);
Var gelu(Var x);
Var elu(Var x, double alpha = 1.0);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var depthwise_conv2d(Var x, Var kernels, Var bias, std::size_t stride, std::size_t padding);
Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);
// [H x W x C] image -> [(H/p)(W/p) x p*p*C] rows of flattened patches.
Var patchify(Var image, std::size_t patch);

// Complex ops over the two leading axes of the unpacked shape.
ComplexVar to_complex(Var real);
ComplexVar make_complex(Var real, Var imag);
Var real_part(ComplexVar z);
Var imag_part(ComplexVar z);
ComplexVar complex_mul(ComplexVar a, ComplexVar b);
ComplexVar fft2(ComplexVar x, const FourierPlan& plan);
ComplexVar ifft2(ComplexVar x, const FourierPlan& plan);

// Regularizers. Both are exact identities when `training` is false or rate is 0.
Var dropout(Var x, double rate, Rng& rng, bool training);
Var droppath(Var branch, double rate, Rng& rng, bool training);

// Softmax cross-entropy of [K] logits against a target smoothed to
// 1 - epsilon on `target` and epsilon / (K - 1) elsewhere.
Var label_smoothing_ce(Var logits, std::size_t target, double epsilon);

}  // namespace painformer::ad
