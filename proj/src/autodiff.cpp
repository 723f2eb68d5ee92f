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

#include "painformer/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "painformer/error.hpp"
#include "painformer/kernels.hpp"

namespace painformer::ad {

const Tensor& Var::value() const { return tape_->value(*this); }

Shape ComplexVar::shape() const {
  const Shape& s = packed.shape();
  return Shape(s.begin() + 1, s.end());
}

Tensor ComplexVar::real_value() const {
  const Tensor& p = packed.value();
  const std::size_t half = p.size() / 2;
  return Tensor(shape(), std::vector<double>(p.storage().begin(), p.storage().begin() + half),
                p.dtype());
}

Tensor ComplexVar::imag_value() const {
  const Tensor& p = packed.value();
  const std::size_t half = p.size() / 2;
  return Tensor(shape(), std::vector<double>(p.storage().begin() + half, p.storage().end()),
                p.dtype());
}

Var Tape::constant(Tensor value) {
  value = value.as_dtype(dtype_);
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  value = value.as_dtype(dtype_);
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs_grad = false;
  for (const Var& v : inputs) {
    if (!v.valid()) continue;
    require(&v.tape() == this, "cannot mix values from different tapes");
    needs_grad = needs_grad || nodes_[v.id()].requires_grad;
  }
  value = value.as_dtype(dtype_);
  if (!value.all_finite()) throw NumericError("non-finite value produced on tape");
  nodes_.push_back(
      Node{std::move(value), std::nullopt, needs_grad ? std::move(backward) : nullptr, needs_grad});
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad) return *n.grad;
  return Tensor(n.value.shape(), DType::f64);
}

Tensor* Tape::grad_slot(Var v) {
  Node& n = nodes_.at(v.id());
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad.emplace(n.value.shape(), DType::f64);
  return &*n.grad;
}

void Tape::backward(Var output) {
  require(value(output).size() == 1, "backward() without a seed needs a scalar output");
  backward(output, Tensor::full(value(output).shape(), 1.0, DType::f64));
}

void Tape::backward(Var output, const Tensor& seed) {
  require(seed.shape() == value(output).shape(), "backward seed shape mismatch");
  for (Node& n : nodes_) n.grad.reset();
  backward_order_.clear();
  if (Tensor* slot = grad_slot(output)) {
    *slot = seed.as_dtype(DType::f64);
  }
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.grad) continue;
    backward_order_.push_back(i);
    // Nodes are never appended during the sweep, so the reference stays valid.
    n.backward(*this, *n.grad);
  }
}

namespace {

void accumulate(Tape& tape, Var v, const Tensor& g) {
  if (!v.valid()) return;
  Tensor* slot = tape.grad_slot(v);
  if (!slot) return;
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Accumulates through a callback that writes into the raw gradient buffer.
template <typename Fn>
void accumulate_with(Tape& tape, Var v, Fn&& fn) {
  if (!v.valid()) return;
  if (Tensor* slot = tape.grad_slot(v)) fn(*slot);
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, g);
    accumulate_with(t, b, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate_with(t, a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    });
    accumulate_with(t, b, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    });
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    accumulate_with(t, a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  });
}

Var add_bias(Var x, Var bias) {
  const std::size_t d = x.shape().back();
  require(bias.value().size() == d, "add_bias: bias length " +
                                        std::to_string(bias.value().size()) +
                                        " does not match last axis " + std::to_string(d));
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % d];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, d](Tape& t, const Tensor& g) {
    accumulate(t, x, g);
    accumulate_with(t, bias, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    });
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    accumulate(t, x, g.reshaped(x.shape()));
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record(Tensor({1}, {total}, DType::f64), {x}, [x](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (double& v : gx.data()) v += g[0];
    });
  });
}

Var exp(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::exp(v);
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * std::exp(x.value()[i]);
    });
  });
}

Var element(Var x, std::size_t index) {
  require(index < x.value().size(), "element index out of range");
  return x.tape().record(Tensor({1}, {x.value()[index]}, DType::f64), {x},
                         [x, index](Tape& t, const Tensor& g) {
                           accumulate_with(t, x, [&](Tensor& gx) { gx[index] += g[0]; });
                         });
}

Var stack(std::span<const Var> scalars) {
  require(!scalars.empty(), "stack needs at least one value");
  std::vector<double> values;
  for (const Var& s : scalars) {
    require(s.value().size() == 1, "stack expects scalar values");
    values.push_back(s.value()[0]);
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  Tape& tape = scalars.front().tape();
  const std::size_t n = values.size();
  return tape.record(Tensor({n}, std::move(values), DType::f64), inputs,
                     [inputs](Tape& t, const Tensor& g) {
                       for (std::size_t i = 0; i < inputs.size(); ++i)
                         accumulate_with(t, inputs[i], [&](Tensor& gs) { gs[0] += g[i]; });
                     });
}

Var concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat needs at least one part");
  std::vector<double> values;
  for (const Var& p : parts) {
    const auto d = p.value().data();
    values.insert(values.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  const std::size_t n = values.size();
  return parts.front().tape().record(
      Tensor({n}, std::move(values), DType::f64), inputs, [inputs](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (const Var& p : inputs) {
          const std::size_t n = p.value().size();
          accumulate_with(t, p, [&](Tensor& gp) {
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
          });
          offset += n;
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows needs at least one part");
  const std::size_t cols = parts.front().shape().back();
  std::size_t rows = 0;
  std::vector<double> values;
  for (const Var& p : parts) {
    require(p.value().rank() == 2 && p.shape()[1] == cols, "concat_rows: column count mismatch");
    rows += p.shape()[0];
    const auto d = p.value().data();
    values.insert(values.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(
      Tensor({rows, cols}, std::move(values), DType::f64), inputs, [inputs](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (const Var& p : inputs) {
          const std::size_t n = p.value().size();
          accumulate_with(t, p, [&](Tensor& gp) {
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
          });
          offset += n;
        }
      });
}

Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) accumulate(t, a, kernels::matmul(g, kernels::transpose(b.value()).as_dtype(DType::f64)));
    if (t.requires_grad(b)) accumulate(t, b, kernels::matmul(kernels::transpose(a.value()).as_dtype(DType::f64), g));
  });
}

Var transpose(Var a) {
  Tensor out = kernels::transpose(a.value());
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    accumulate(t, a, kernels::transpose(g));
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Shape& xs = x.shape();
  const std::size_t in = xs.back();
  require(weight.value().rank() == 2 && weight.shape()[0] == in,
          "linear: weight " + shape_string(weight.shape()) + " cannot consume input " +
              shape_string(xs));
  const std::size_t out_dim = weight.shape()[1];
  const std::size_t rows = x.value().size() / in;
  Tensor flat = x.value().reshaped({rows, in});
  Tensor out = kernels::matmul(flat, weight.value());
  if (bias.valid()) {
    require(bias.value().size() == out_dim, "linear: bias length mismatch");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < out_dim; ++c) out.at(r, c) += bias.value()[c];
  }
  Shape out_shape = xs;
  out_shape.back() = out_dim;
  out = out.reshaped(out_shape);
  return x.tape().record(
      std::move(out), {x, weight, bias}, [x, weight, bias, rows, in, out_dim](Tape& t, const Tensor& g) {
        const Tensor g2 = g.reshaped({rows, out_dim});
        if (t.requires_grad(x)) {
          Tensor gx = kernels::matmul(g2, kernels::transpose(weight.value()).as_dtype(DType::f64));
          accumulate(t, x, gx.reshaped(x.shape()));
        }
        if (t.requires_grad(weight)) {
          Tensor xt = kernels::transpose(x.value().reshaped({rows, in})).as_dtype(DType::f64);
          accumulate(t, weight, kernels::matmul(xt, g2));
        }
        accumulate_with(t, bias, [&](Tensor& gb) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < out_dim; ++c) gb[c] += g2.at(r, c);
        });
      });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  require(x.value().rank() == 2, "slice_cols expects a matrix");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  require(count > 0 && begin + count <= cols, "slice_cols range out of bounds");
  Tensor out({rows, count}, DType::f64);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = x.value().at(r, begin + c);
  return x.tape().record(std::move(out), {x}, [x, begin, count, rows](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) gx.at(r, begin + c) += g.at(r, c);
    });
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  require(x.value().rank() == 2, "slice_rows expects a matrix");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  require(count > 0 && begin + count <= rows, "slice_rows range out of bounds");
  const auto src = x.value().data().subspan(begin * cols, count * cols);
  Tensor out({count, cols}, std::vector<double>(src.begin(), src.end()), DType::f64);
  return x.tape().record(std::move(out), {x}, [x, begin, cols](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
    });
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols needs at least one part");
  const std::size_t rows = parts.front().shape()[0];
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require(p.value().rank() == 2 && p.shape()[0] == rows, "concat_cols: row count mismatch");
    cols += p.shape()[1];
  }
  Tensor out({rows, cols}, DType::f64);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p.shape()[1];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pc; ++c) out.at(r, offset + c) = p.value().at(r, c);
    offset += pc;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), inputs, [inputs, rows](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t pc = p.shape()[1];
      accumulate_with(t, p, [&](Tensor& gp) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < pc; ++c) gp.at(r, c) += g.at(r, off + c);
      });
      off += pc;
    }
  });
}

Var mean_rows(Var x) {
  require(x.value().rank() == 2, "mean_rows expects a matrix");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out({cols}, DType::f64);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += x.value().at(r, c);
  for (double& v : out.data()) v /= static_cast<double>(rows);
  return x.tape().record(std::move(out), {x}, [x, rows, cols](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += g[c] * inv;
    });
  });
}

Var softmax_rows(Var x) {
  Tensor out = kernels::softmax_rows(x.value());
  const std::size_t cols = x.shape().back();
  return x.tape().record(std::move(out), {x}, [x, cols](Tape& t, const Tensor& g) {
    const Tensor y = kernels::softmax_rows(x.value());
    accumulate_with(t, x, [&](Tensor& gx) {
      const std::size_t rows = y.size() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
      }
    });
  });
}

Var gelu(Var x) {
  Tensor out = kernels::gelu(x.value());
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * kernels::gelu_derivative(x.value()[i]);
    });
  });
}

Var elu(Var x, double alpha) {
  Tensor out = kernels::elu(x.value(), alpha);
  return x.tape().record(std::move(out), {x}, [x, alpha](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x.value()[i];
        gx[i] += g[i] * (v > 0.0 ? 1.0 : alpha * std::exp(v));
      }
    });
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tensor out = kernels::layer_norm(x.value(), gamma.value(), beta.value(), eps);
  return x.tape().record(std::move(out), {x, gamma, beta}, [x, gamma, beta, eps](Tape& t, const Tensor& g) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.value().size() / d;
    Tensor* gx = t.grad_slot(x);
    Tensor* gg = t.grad_slot(gamma);
    Tensor* gb = t.grad_slot(beta);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = x.value().data().data() + r * d;
      const double* go = g.data().data() + r * d;
      double mean = 0.0;
      for (std::size_t i = 0; i < d; ++i) mean += in[i];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
      var /= static_cast<double>(d);
      const double inv_std = 1.0 / std::sqrt(var + eps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        xhat[i] = (in[i] - mean) * inv_std;
        dxhat[i] = go[i] * gamma.value()[i];
        sum_dxhat += dxhat[i];
        sum_dxhat_xhat += dxhat[i] * xhat[i];
        if (gg) (*gg)[i] += go[i] * xhat[i];
        if (gb) (*gb)[i] += go[i];
      }
      if (gx) {
        const double dd = static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i)
          (*gx)[r * d + i] += inv_std / dd * (dd * dxhat[i] - sum_dxhat - xhat[i] * sum_dxhat_xhat);
      }
    }
  });
}

Var depthwise_conv2d(Var x, Var kernels_var, Var bias, std::size_t stride, std::size_t padding) {
  Tensor out = kernels::depthwise_conv2d(x.value(), kernels_var.value(), stride, padding);
  const std::size_t c = x.shape()[2];
  if (bias.valid()) {
    require(bias.value().size() == c, "depthwise_conv2d: bias length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % c];
  }
  return x.tape().record(std::move(out), {x, kernels_var, bias},
                         [x, kernels_var, bias, stride, padding, c](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernels_var.value();
    const std::size_t h = xv.dim(0), w = xv.dim(1), k = kv.dim(0);
    const std::size_t oh = g.dim(0), ow = g.dim(1);
    Tensor* gx = t.grad_slot(x);
    Tensor* gk = t.grad_slot(kernels_var);
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* go = &g.at(oy, ox, 0);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
            for (std::size_t ch = 0; ch < c; ++ch) {
              if (gx) gx->at(uy, ux, ch) += go[ch] * kv.at(ky, kx, ch);
              if (gk) gk->at(ky, kx, ch) += go[ch] * xv.at(uy, ux, ch);
            }
          }
        }
      }
    }
    accumulate_with(t, bias, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    });
  });
}

Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  Tensor out = kernels::conv2d(x.value(), weight.value(), bias.value(), stride, padding);
  return x.tape().record(std::move(out), {x, weight, bias},
                         [x, weight, bias, stride, padding](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const std::size_t h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
    const std::size_t k = wv.dim(0), cout = wv.dim(3);
    const std::size_t oh = g.dim(0), ow = g.dim(1);
    Tensor* gx = t.grad_slot(x);
    Tensor* gw = t.grad_slot(weight);
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* go = &g.at(oy, ox, 0);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
            const std::size_t wbase = ((ky * k + kx) * cin) * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double xval = xv.at(uy, ux, ci);
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) {
                acc += go[co] * wv[wbase + ci * cout + co];
                if (gw) (*gw)[wbase + ci * cout + co] += go[co] * xval;
              }
              if (gx) gx->at(uy, ux, ci) += acc;
            }
          }
        }
      }
    }
    accumulate_with(t, bias, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cout] += g[i];
    });
  });
}

Var patchify(Var image, std::size_t patch) {
  require(image.value().rank() == 3, "patchify expects an [H,W,C] image");
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  require(patch > 0 && h % patch == 0 && w % patch == 0,
          "image " + shape_string(image.shape()) + " is not divisible into " +
              std::to_string(patch) + "x" + std::to_string(patch) + " patches");
  const std::size_t gh = h / patch, gw = w / patch;
  const std::size_t width = patch * patch * c;
  // Maps each output entry to its source pixel index.
  std::vector<std::size_t> source(gh * gw * width);
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t row = py * gw + px;
            const std::size_t col = (y * patch + x) * c + ch;
            source[row * width + col] = ((py * patch + y) * w + (px * patch + x)) * c + ch;
          }
  Tensor out({gh * gw, width}, DType::f64);
  for (std::size_t i = 0; i < source.size(); ++i) out[i] = image.value()[source[i]];
  return image.tape().record(std::move(out), {image}, [image, source](Tape& t, const Tensor& g) {
    accumulate_with(t, image, [&](Tensor& gi) {
      for (std::size_t i = 0; i < source.size(); ++i) gi[source[i]] += g[i];
    });
  });
}

ComplexVar make_complex(Var real, Var imag) {
  require_same_shape(real, imag, "make_complex");
  Shape packed_shape{2};
  packed_shape.insert(packed_shape.end(), real.shape().begin(), real.shape().end());
  std::vector<double> values(real.value().storage());
  values.insert(values.end(), imag.value().storage().begin(), imag.value().storage().end());
  const std::size_t n = real.value().size();
  Var packed = real.tape().record(Tensor(packed_shape, std::move(values), DType::f64), {real, imag},
                                  [real, imag, n](Tape& t, const Tensor& g) {
    accumulate_with(t, real, [&](Tensor& gr) {
      for (std::size_t i = 0; i < n; ++i) gr[i] += g[i];
    });
    accumulate_with(t, imag, [&](Tensor& gi) {
      for (std::size_t i = 0; i < n; ++i) gi[i] += g[n + i];
    });
  });
  return ComplexVar{packed};
}

ComplexVar to_complex(Var real) {
  return make_complex(real, real.tape().constant(Tensor(real.shape())));
}

namespace {

Var half(ComplexVar z, bool imaginary) {
  const Tensor& p = z.packed.value();
  const std::size_t n = p.size() / 2;
  const std::size_t offset = imaginary ? n : 0;
  Tensor out = imaginary ? z.imag_value() : z.real_value();
  Var packed = z.packed;
  return packed.tape().record(std::move(out), {packed}, [packed, n, offset](Tape& t, const Tensor& g) {
    accumulate_with(t, packed, [&](Tensor& gp) {
      for (std::size_t i = 0; i < n; ++i) gp[offset + i] += g[i];
    });
  });
}

ComplexGrid unpack(const Tensor& packed) {
  const std::size_t n = packed.size() / 2;
  ComplexGrid grid(Shape(packed.shape().begin() + 1, packed.shape().end()), packed.dtype());
  std::copy(packed.storage().begin(), packed.storage().begin() + n, grid.re.begin());
  std::copy(packed.storage().begin() + n, packed.storage().end(), grid.im.begin());
  return grid;
}

Tensor pack(const ComplexGrid& grid, DType dtype) {
  Shape s{2};
  s.insert(s.end(), grid.shape.begin(), grid.shape.end());
  std::vector<double> values(grid.re);
  values.insert(values.end(), grid.im.begin(), grid.im.end());
  return Tensor(s, std::move(values), dtype);
}

}  // namespace

Var real_part(ComplexVar z) { return half(z, false); }
Var imag_part(ComplexVar z) { return half(z, true); }

ComplexVar complex_mul(ComplexVar a, ComplexVar b) {
  require(a.shape() == b.shape(), "complex_mul: shape mismatch");
  const Tensor& av = a.packed.value();
  const Tensor& bv = b.packed.value();
  const std::size_t n = av.size() / 2;
  Tensor out(av.shape(), DType::f64);
  for (std::size_t i = 0; i < n; ++i) {
    const double ar = av[i], ai = av[n + i], br = bv[i], bi = bv[n + i];
    out[i] = ar * br - ai * bi;
    out[n + i] = ar * bi + ai * br;
  }
  Var pa = a.packed, pb = b.packed;
  Var packed = pa.tape().record(std::move(out), {pa, pb}, [pa, pb, n](Tape& t, const Tensor& g) {
    // dL/dA = G * conj(B), dL/dB = G * conj(A).
    const Tensor& av2 = pa.value();
    const Tensor& bv2 = pb.value();
    accumulate_with(t, pa, [&](Tensor& ga) {
      for (std::size_t i = 0; i < n; ++i) {
        const double gr = g[i], gi = g[n + i], br = bv2[i], bi = bv2[n + i];
        ga[i] += gr * br + gi * bi;
        ga[n + i] += gi * br - gr * bi;
      }
    });
    accumulate_with(t, pb, [&](Tensor& gb) {
      for (std::size_t i = 0; i < n; ++i) {
        const double gr = g[i], gi = g[n + i], ar = av2[i], ai = av2[n + i];
        gb[i] += gr * ar + gi * ai;
        gb[n + i] += gi * ar - gr * ai;
      }
    });
  });
  return ComplexVar{packed};
}

ComplexVar fft2(ComplexVar x, const FourierPlan& plan) {
  Var px = x.packed;
  const DType dtype = px.tape().dtype();
  Tensor out = pack(painformer::fft2(unpack(px.value()), plan), dtype);
  Var packed = px.tape().record(std::move(out), {px}, [px, plan](Tape& t, const Tensor& g) {
    // Adjoint of the unnormalized DFT is its conjugate transpose.
    accumulate(t, px, pack(fft2_adjoint(unpack(g), plan), DType::f64));
  });
  return ComplexVar{packed};
}

ComplexVar ifft2(ComplexVar x, const FourierPlan& plan) {
  Var px = x.packed;
  const DType dtype = px.tape().dtype();
  Tensor out = pack(painformer::ifft2(unpack(px.value()), plan), dtype);
  Var packed = px.tape().record(std::move(out), {px}, [px, plan](Tape& t, const Tensor& g) {
    ComplexGrid back = painformer::fft2(unpack(g), plan);
    const double s = 1.0 / static_cast<double>(plan.rows() * plan.cols());
    for (double& v : back.re) v *= s;
    for (double& v : back.im) v *= s;
    accumulate(t, px, pack(back, DType::f64));
  });
  return ComplexVar{packed};
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape().record(std::move(out), {x}, [x, mask](Tape& t, const Tensor& g) {
    accumulate_with(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  });
}

Var droppath(Var branch, double rate, Rng& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, "droppath rate must be in [0, 1)");
  if (!training || rate == 0.0) return branch;
  const double factor = rng.bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
  return scale(branch, factor);
}

Var label_smoothing_ce(Var logits, std::size_t target, double epsilon) {
  const Tensor& z = logits.value();
  const std::size_t k = z.size();
  require(k >= 2, "label_smoothing_ce needs at least two classes");
  require(target < k, "target class " + std::to_string(target) + " out of range for " +
                          std::to_string(k) + " logits");
  require(epsilon >= 0.0 && epsilon < 1.0, "label smoothing epsilon must be in [0, 1)");
  const double peak = *std::max_element(z.data().begin(), z.data().end());
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - peak);
  const double log_total = std::log(total) + peak;
  std::vector<double> q(k, epsilon / static_cast<double>(k - 1));
  q[target] = 1.0 - epsilon;
  double loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) loss -= q[i] * (z[i] - log_total);
  return logits.tape().record(Tensor({1}, {loss}, DType::f64), {logits},
                              [logits, q, log_total](Tape& t, const Tensor& g) {
    accumulate_with(t, logits, [&](Tensor& gz) {
      for (std::size_t i = 0; i < q.size(); ++i)
        gz[i] += g[0] * (std::exp(logits.value()[i] - log_total) - q[i]);
    });
  });
}

}  // namespace painformer::ad
