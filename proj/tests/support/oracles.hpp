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

// Independent reference implementations used only by tests. None of these
// call into the library's fast paths.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "painformer/autodiff.hpp"
#include "painformer/fft.hpp"
#include "painformer/params.hpp"
#include "painformer/tensor.hpp"

namespace painformer::testing {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0, DType dtype = DType::f64);
ComplexGrid random_grid(std::size_t m, std::size_t n, std::uint64_t seed, DType dtype = DType::f64);

// Direct O(M^2 N^2) evaluation of the 2-D DFT double sum.
ComplexGrid dft2_bruteforce(const ComplexGrid& x, bool inverse);

// Naive loop convolution for [h,w,c] inputs and [k,k,c] depthwise kernels.
Tensor depthwise_conv_bruteforce(const Tensor& x, const Tensor& kernels, std::size_t stride,
                                 std::size_t padding);

// Stored SHA-256 digest named `name` in golden/rasterizer.sha256; empty if absent.
std::string golden_digest(const std::string& name);

// Fresh empty directory under the system temp directory.
std::filesystem::path scratch_dir(const std::string& tag);

// Dense convolution by direct summation: x [h,w,cin], weight [k,k,cin,cout].
Tensor conv2d_bruteforce(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         std::size_t stride, std::size_t padding);

// softmax(q k^T / sqrt(d)) v for a single head written as explicit loops.
Tensor attention_loops(const Tensor& q, const Tensor& k, const Tensor& v);

// Bilinear sample of a [h,w] map at output pixel (y, x) of an out_h x out_w
// grid using half-pixel centers.
double bilinear_reference(const Tensor& src, std::size_t out_h, std::size_t out_w, std::size_t y,
                          std::size_t x);

// Runs `build` on a fresh f64 tape, reduces its output with fixed random
// weights, and compares reverse-mode gradients for every input with central
// differences. Returns the worst relative error over all inputs.
using GraphBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;
double gradient_check(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                      double eps = 1e-5);

// Like gradient_check, but differentiates with respect to every tensor of a
// parameter set bound through BoundParameters.
using ParameterGraph = std::function<ad::Var(ad::Tape&, const BoundParameters&)>;
double parameter_gradient_check(const ParameterGraph& build, const ParameterSet& params,
                                double eps = 1e-5);

struct GradientCase {
  std::string name;
  GraphBuilder build;
  std::vector<Tensor> inputs;
};

// One case per differentiable tape op.
std::vector<GradientCase> op_gradient_cases();


}  // namespace painformer::testing
