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

#include "painformer/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "painformer/error.hpp"

namespace painformer::kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 operands");
  const std::size_t rows = a.dim(0);
  const std::size_t inner = a.dim(1);
  const std::size_t cols = b.dim(1);
  require(b.dim(0) == inner, "matmul inner dimension mismatch: " + shape_string(a.shape()) +
                                 " * " + shape_string(b.shape()));
  Tensor out({rows, cols}, a.dtype());
  if (rows == 0 || cols == 0 || inner == 0) return out;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(rows), static_cast<int>(cols),
              static_cast<int>(inner), 1.0, a.data().data(), static_cast<int>(inner), b.data().data(),
              static_cast<int>(cols), 0.0, out.data().data(), static_cast<int>(cols));
  return out.round_to_dtype();
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose expects a rank-2 tensor");
  Tensor out({a.dim(1), a.dim(0)}, a.dtype());
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require(x.rank() >= 1, "softmax_rows expects at least rank 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  Tensor out(x.shape(), x.dtype());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return out.round_to_dtype();
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape(), x.dtype());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out.round_to_dtype();
}

double elu(double x, double alpha) { return x > 0.0 ? x : alpha * std::expm1(x); }

Tensor elu(const Tensor& x, double alpha) {
  Tensor out(x.shape(), x.dtype());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = elu(x[i], alpha);
  return out.round_to_dtype();
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  require(gamma.size() == d && beta.size() == d,
          "layer_norm: gamma/beta length must equal last axis " + std::to_string(d));
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape(), x.dtype());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double* o = out.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += in[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) o[i] = (in[i] - mean) * inv_std * gamma[i] + beta[i];
  }
  return out.round_to_dtype();
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  require(stride >= 1, "convolution stride must be positive");
  require(in + 2 * padding >= kernel, "convolution kernel larger than padded input");
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernels, std::size_t stride,
                        std::size_t padding) {
  require(x.rank() == 3 && kernels.rank() == 3, "depthwise_conv2d expects [h,w,c] and [k,k,c]");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t k = kernels.dim(0);
  require(kernels.dim(1) == k && k % 2 == 1, "depthwise_conv2d kernel must be square and odd");
  require(kernels.dim(2) == c, "depthwise_conv2d: " + std::to_string(kernels.dim(2)) +
                                   " kernels for " + std::to_string(c) + " channels");
  const std::size_t oh = conv_output_size(h, k, stride, padding);
  const std::size_t ow = conv_output_size(w, k, stride, padding);
  Tensor out({oh, ow, c}, x.dtype());
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = &out.at(oy, ox, 0);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* in = &x.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
          const double* kv = &kernels.at(ky, kx, 0);
          for (std::size_t ch = 0; ch < c; ++ch) o[ch] += in[ch] * kv[ch];
        }
      }
    }
  }
  return out.round_to_dtype();
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require(x.rank() == 3 && weight.rank() == 4, "conv2d expects [h,w,cin] and [k,k,cin,cout]");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t k = weight.dim(0);
  const std::size_t cout = weight.dim(3);
  require(weight.dim(1) == k && weight.dim(2) == cin,
          "conv2d weight " + shape_string(weight.shape()) + " incompatible with input " +
              shape_string(x.shape()));
  require(bias.size() == cout, "conv2d bias length must equal output channels");
  const std::size_t oh = conv_output_size(h, k, stride, padding);
  const std::size_t ow = conv_output_size(w, k, stride, padding);
  Tensor out({oh, ow, cout}, x.dtype());
  const double* wp = weight.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = &out.at(oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* in = &x.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
          const double* wk = wp + ((ky * k + kx) * cin) * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = in[ci];
            const double* wrow = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += v * wrow[co];
          }
        }
      }
    }
  }
  return out.round_to_dtype();
}

Tensor bilinear_resize(const Tensor& src, std::size_t out_h, std::size_t out_w) {
  require(src.rank() == 2, "bilinear_resize expects a rank-2 map");
  const std::size_t h = src.dim(0), w = src.dim(1);
  Tensor out({out_h, out_w}, src.dtype());
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = src.at(y0, x0) * (1.0 - tx) + src.at(y0, x1) * tx;
      const double bottom = src.at(y1, x0) * (1.0 - tx) + src.at(y1, x1) * tx;
      out.at(y, x) = top * (1.0 - ty) + bottom * ty;
    }
  }
  return out.round_to_dtype();
}

}  // namespace painformer::kernels
