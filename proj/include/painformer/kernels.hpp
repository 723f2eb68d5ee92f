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

#include "painformer/tensor.hpp"

// Eager (non-recording) implementations of the neural-network primitives.
// The tape ops in autodiff.hpp call these for their forward values.
namespace painformer::kernels {

inline constexpr double kLayerNormEps = 1e-5;

// [R x K] * [K x C] -> [R x C].
Tensor matmul(const Tensor& a, const Tensor& b);
// [R x C] -> [C x R].
Tensor transpose(const Tensor& a);

// Softmax over the last axis with max-shift.
Tensor softmax_rows(const Tensor& x);

double gelu(double x);
double gelu_derivative(double x);
Tensor gelu(const Tensor& x);

double elu(double x, double alpha = 1.0);
Tensor elu(const Tensor& x, double alpha = 1.0);

// Normalizes every vector along the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

// x: [h x w x c], kernels: [k x k x c] (one k x k filter per channel).
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernels, std::size_t stride,
                        std::size_t padding);

// x: [h x w x cin], weight: [k x k x cin x cout], bias: [cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Bilinear resampling of a [h x w] map with half-pixel centers and edge clamping.
Tensor bilinear_resize(const Tensor& src, std::size_t out_h, std::size_t out_w);

}  // namespace painformer::kernels
