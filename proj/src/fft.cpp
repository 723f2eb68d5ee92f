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

#include "painformer/fft.hpp"

#include <cmath>
#include <numbers>

#include "painformer/error.hpp"

namespace painformer {

namespace {

using cplx = std::complex<double>;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

constexpr std::size_t kDirectLimit = 32;

}  // namespace

ComplexGrid::ComplexGrid(Shape s, DType d)
    : shape(std::move(s)), re(shape_size(shape), 0.0), im(shape_size(shape), 0.0), dtype(d) {
  for (std::size_t dim : shape) require(dim > 0, "complex grid dimensions must be positive");
}

ComplexGrid ComplexGrid::from_real(const Tensor& real) {
  ComplexGrid g(real.shape(), real.dtype());
  g.re = real.storage();
  return g;
}

ComplexGrid ComplexGrid::from_parts(const Tensor& real, const Tensor& imag) {
  require(real.shape() == imag.shape(), "real/imaginary shape mismatch");
  ComplexGrid g(real.shape(), real.dtype());
  g.re = real.storage();
  g.im = imag.storage();
  return g;
}

Tensor ComplexGrid::real() const { return Tensor(shape, re, dtype); }
Tensor ComplexGrid::imag() const { return Tensor(shape, im, dtype); }

ComplexGrid& ComplexGrid::round_to_dtype() {
  if (dtype == DType::f32) {
    for (double& v : re) v = round_to(DType::f32, v);
    for (double& v : im) v = round_to(DType::f32, v);
  }
  return *this;
}

FourierPlan1D::FourierPlan1D(std::size_t n) : n_(n) {
  require(n >= 1, "FFT length must be at least 1");
  twiddles_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = std::polar(1.0, angle);
  }

  if (is_power_of_two(n)) {
    method_ = Method::radix2;
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    bit_reverse_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      bit_reverse_[i] = r;
    }
  } else if (n <= kDirectLimit) {
    method_ = Method::direct;
  } else {
    method_ = Method::bluestein;
    const std::size_t m = next_power_of_two(2 * n - 1);
    convolution_plan_ = std::make_shared<FourierPlan1D>(m);
    chirp_.resize(n);
    // exp(-i pi k^2 / n); k^2 reduced mod 2n keeps the angle small.
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t k2 = (k * k) % (2 * n);
      chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
    }
    chirp_spectrum_.assign(m, cplx{});
    chirp_spectrum_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
      chirp_spectrum_[k] = std::conj(chirp_[k]);
      chirp_spectrum_[m - k] = std::conj(chirp_[k]);
    }
    convolution_plan_->transform(chirp_spectrum_, false);
  }
}

void FourierPlan1D::transform(std::span<cplx> data, bool inverse) const {
  require(data.size() == n_, "FFT buffer length does not match plan");
  switch (method_) {
    case Method::radix2:
      radix2(data, inverse);
      break;
    case Method::direct:
      direct(data, inverse);
      break;
    case Method::bluestein:
      bluestein(data, inverse);
      break;
  }
}

void FourierPlan1D::radix2(std::span<cplx> data, bool inverse) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bit_reverse_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        cplx w = twiddles_[k * stride];
        if (inverse) w = std::conj(w);
        const cplx a = data[start + k];
        const cplx b = data[start + k + half] * w;
        data[start + k] = a + b;
        data[start + k + half] = a - b;
      }
    }
  }
}

void FourierPlan1D::direct(std::span<cplx> data, bool inverse) const {
  std::vector<cplx> out(n_);
  for (std::size_t k = 0; k < n_; ++k) {
    cplx acc{};
    for (std::size_t j = 0; j < n_; ++j) {
      cplx w = twiddles_[(k * j) % n_];
      if (inverse) w = std::conj(w);
      acc += data[j] * w;
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), data.begin());
}

void FourierPlan1D::bluestein(std::span<cplx> data, bool inverse) const {
  // The inverse transform is conj(F(conj(x))).
  const std::size_t m = convolution_plan_->size();
  std::vector<cplx> a(m, cplx{});
  for (std::size_t k = 0; k < n_; ++k) {
    const cplx x = inverse ? std::conj(data[k]) : data[k];
    a[k] = x * chirp_[k];
  }
  convolution_plan_->transform(a, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= chirp_spectrum_[k];
  convolution_plan_->transform(a, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n_; ++k) {
    const cplx y = a[k] * scale * chirp_[k];
    data[k] = inverse ? std::conj(y) : y;
  }
}

FourierPlan::FourierPlan(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

namespace {

enum class Direction { forward, inverse_normalized, adjoint };

ComplexGrid transform2(const ComplexGrid& x, const FourierPlan& plan, Direction direction) {
  require(x.shape.size() >= 2, "fft2 expects at least a rank-2 grid");
  const std::size_t m = x.shape[0];
  const std::size_t n = x.shape[1];
  require(m == plan.rows() && n == plan.cols(),
          "fft2 plan is " + std::to_string(plan.rows()) + "x" + std::to_string(plan.cols()) +
              " but grid is " + shape_string(x.shape));
  const std::size_t channels = x.size() / (m * n);
  const bool inverse = direction != Direction::forward;

  ComplexGrid out = x;
  std::vector<cplx> buffer(std::max(m, n));

  // Along v (columns of each row).
  std::span<cplx> row_buf(buffer.data(), n);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t v = 0; v < n; ++v) row_buf[v] = out[(u * n + v) * channels + c];
      plan.col_plan().transform(row_buf, inverse);
      for (std::size_t v = 0; v < n; ++v) out.set((u * n + v) * channels + c, row_buf[v]);
    }
  }
  // Along u.
  std::span<cplx> col_buf(buffer.data(), m);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t u = 0; u < m; ++u) col_buf[u] = out[(u * n + v) * channels + c];
      plan.row_plan().transform(col_buf, inverse);
      for (std::size_t u = 0; u < m; ++u) out.set((u * n + v) * channels + c, col_buf[u]);
    }
  }

  if (direction == Direction::inverse_normalized) {
    const double scale = 1.0 / static_cast<double>(m * n);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.re[i] *= scale;
      out.im[i] *= scale;
    }
  }
  return out.round_to_dtype();
}

}  // namespace

ComplexGrid fft2(const ComplexGrid& x, const FourierPlan& plan) {
  return transform2(x, plan, Direction::forward);
}

ComplexGrid ifft2(const ComplexGrid& x, const FourierPlan& plan) {
  return transform2(x, plan, Direction::inverse_normalized);
}

ComplexGrid fft2_adjoint(const ComplexGrid& x, const FourierPlan& plan) {
  return transform2(x, plan, Direction::adjoint);
}

std::vector<cplx> rfft(std::span<const double> x, const FourierPlan1D& plan) {
  require(x.size() == plan.size(), "rfft input length does not match plan");
  std::vector<cplx> buf(x.begin(), x.end());
  plan.transform(buf, false);
  buf.resize(plan.size() / 2 + 1);
  return buf;
}

}  // namespace painformer
