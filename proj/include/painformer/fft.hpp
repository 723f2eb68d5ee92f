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

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "painformer/tensor.hpp"

namespace painformer {

// Dense complex array with split real/imaginary storage. Axis 0 is u (M
// rows), axis 1 is v (N columns); any trailing axes are independent channels.
struct ComplexGrid {
  Shape shape;
  std::vector<double> re;
  std::vector<double> im;
  DType dtype = DType::f32;

  ComplexGrid() = default;
  explicit ComplexGrid(Shape shape, DType dtype = DType::f32);

  static ComplexGrid from_real(const Tensor& real);
  static ComplexGrid from_parts(const Tensor& real, const Tensor& imag);

  std::size_t size() const { return re.size(); }
  std::complex<double> operator[](std::size_t i) const { return {re[i], im[i]}; }
  void set(std::size_t i, std::complex<double> z) {
    re[i] = z.real();
    im[i] = z.imag();
  }

  Tensor real() const;
  Tensor imag() const;
  ComplexGrid& round_to_dtype();
};

// One-dimensional DFT of a fixed length. Powers of two use an iterative
// radix-2 kernel, other lengths up to 32 a direct table-driven DFT, and
// longer ones Bluestein's chirp-z reduction onto a radix-2 kernel.
class FourierPlan1D {
 public:
  enum class Method { radix2, direct, bluestein };

  explicit FourierPlan1D(std::size_t n);

  std::size_t size() const { return n_; }
  Method method() const { return method_; }

  // twiddles()[k] == W_n^k == exp(-i 2 pi k / n) for k in [0, n).
  const std::vector<std::complex<double>>& twiddles() const { return twiddles_; }

  // In place and unnormalized in both directions; `inverse` flips the
  // exponent sign.
  void transform(std::span<std::complex<double>> data, bool inverse) const;

 private:
  void radix2(std::span<std::complex<double>> data, bool inverse) const;
  void direct(std::span<std::complex<double>> data, bool inverse) const;
  void bluestein(std::span<std::complex<double>> data, bool inverse) const;

  std::size_t n_;
  Method method_;
  std::vector<std::complex<double>> twiddles_;
  std::vector<std::size_t> bit_reverse_;
  // Bluestein state.
  std::shared_ptr<const FourierPlan1D> convolution_plan_;
  std::vector<std::complex<double>> chirp_;
  std::vector<std::complex<double>> chirp_spectrum_;
};

// Plan for M x N transforms over the two leading axes of a grid.
class FourierPlan {
 public:
  FourierPlan(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_.size(); }
  std::size_t cols() const { return cols_.size(); }
  const FourierPlan1D& row_plan() const { return rows_; }
  const FourierPlan1D& col_plan() const { return cols_; }

 private:
  FourierPlan1D rows_;
  FourierPlan1D cols_;
};

// X[u,v] = sum_m sum_n x[m,n] exp(-i 2 pi (um/M + vn/N)), unnormalized.
ComplexGrid fft2(const ComplexGrid& x, const FourierPlan& plan);
// x[m,n] = 1/(MN) sum_u sum_v X[u,v] exp(+i 2 pi (um/M + vn/N)).
ComplexGrid ifft2(const ComplexGrid& x, const FourierPlan& plan);

// Unnormalized inverse-direction transform (no 1/(MN) factor). This is the
// conjugate transpose of fft2 and is what reverse-mode differentiation needs.
ComplexGrid fft2_adjoint(const ComplexGrid& x, const FourierPlan& plan);

// One-sided DFT of a real sequence: bins 0..n/2.
std::vector<std::complex<double>> rfft(std::span<const double> x, const FourierPlan1D& plan);

}  // namespace painformer
