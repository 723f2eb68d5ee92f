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

#include "painformer/layers.hpp"

#include <cmath>

#include "painformer/error.hpp"

namespace painformer::layers {

NormVars bind_norm(const BoundParameters& p, const std::string& prefix) {
  return {p(prefix + ".gamma"), p(prefix + ".beta")};
}

MlpVars bind_mlp(const BoundParameters& p, const std::string& prefix, bool depthwise) {
  MlpVars m{p(prefix + ".w1"), p(prefix + ".b1"), p(prefix + ".w2"), p(prefix + ".b2"), {}, {}};
  if (depthwise) {
    m.dw_kernels = p(prefix + ".dw");
    m.dw_bias = p(prefix + ".dw_bias");
  }
  return m;
}

AttentionVars bind_attention(const BoundParameters& p, const std::string& prefix, std::size_t heads) {
  return {p(prefix + ".wq"), p(prefix + ".wk"), p(prefix + ".wv"), p(prefix + ".wo"),
          p(prefix + ".bo"), heads};
}

void add_norm(ParameterSet& params, const std::string& prefix, std::size_t dim) {
  params.add(prefix + ".gamma", Tensor::full({dim}, 1.0, DType::f64));
  params.add(prefix + ".beta", Tensor({dim}, DType::f64));
}

void add_mlp(ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t ratio,
             bool depthwise, Rng& rng) {
  const std::size_t hidden = dim * ratio;
  params.add(prefix + ".w1", init_fan_in({dim, hidden}, rng));
  params.add(prefix + ".b1", Tensor({hidden}, DType::f64));
  if (depthwise) {
    params.add(prefix + ".dw", init_normal({3, 3, hidden}, 1.0 / 3.0, rng));
    params.add(prefix + ".dw_bias", Tensor({hidden}, DType::f64));
  }
  params.add(prefix + ".w2", init_fan_in({hidden, dim}, rng));
  params.add(prefix + ".b2", Tensor({dim}, DType::f64));
}

void add_attention(ParameterSet& params, const std::string& prefix, std::size_t query_dim,
                   std::size_t kv_dim, std::size_t dim, Rng& rng) {
  params.add(prefix + ".wq", init_fan_in({query_dim, dim}, rng));
  params.add(prefix + ".wk", init_fan_in({kv_dim, dim}, rng));
  params.add(prefix + ".wv", init_fan_in({kv_dim, dim}, rng));
  params.add(prefix + ".wo", init_fan_in({dim, dim}, rng));
  params.add(prefix + ".bo", Tensor({dim}, DType::f64));
}

ad::Var norm(ad::Var x, const NormVars& n) { return ad::layer_norm(x, n.gamma, n.beta); }

ad::Var mlp(ad::Var x, const MlpVars& m) {
  ad::Var h = ad::linear(x, m.w1, m.b1);
  if (m.has_depthwise()) {
    require(h.value().rank() == 3, "depthwise MLP expects an [h,w,d] token grid");
    h = ad::depthwise_conv2d(h, m.dw_kernels, m.dw_bias, 1, 1);
  }
  return ad::linear(ad::gelu(h), m.w2, m.b2);
}

ad::Var multi_head_attention(ad::Var queries, ad::Var context, const AttentionVars& a,
                             Tensor* weights_out) {
  require(queries.value().rank() == 2 && context.value().rank() == 2,
          "attention expects [tokens x width] inputs");
  ad::Var q = ad::matmul(queries, a.wq);
  ad::Var k = ad::matmul(context, a.wk);
  ad::Var v = ad::matmul(context, a.wv);
  const std::size_t dim = q.shape()[1];
  require(k.shape()[1] == dim, "query and key projections disagree on width");
  require(a.heads >= 1 && dim % a.heads == 0,
          "width " + std::to_string(dim) + " is not divisible by " + std::to_string(a.heads) + " heads");
  const std::size_t head_dim = dim / a.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::size_t n = q.shape()[0], kv = k.shape()[0];
  if (weights_out) *weights_out = Tensor({a.heads, n, kv}, DType::f64);

  std::vector<ad::Var> outputs;
  outputs.reserve(a.heads);
  for (std::size_t h = 0; h < a.heads; ++h) {
    ad::Var qh = a.heads == 1 ? q : ad::slice_cols(q, h * head_dim, head_dim);
    ad::Var kh = a.heads == 1 ? k : ad::slice_cols(k, h * head_dim, head_dim);
    ad::Var vh = a.heads == 1 ? v : ad::slice_cols(v, h * head_dim, head_dim);
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
    if (weights_out) {
      const auto src = weights.value().data();
      std::copy(src.begin(), src.end(), weights_out->data().begin() + h * n * kv);
    }
    outputs.push_back(ad::matmul(weights, vh));
  }
  ad::Var merged = a.heads == 1 ? outputs.front() : ad::concat_cols(outputs);
  return ad::linear(merged, a.wo, a.bo);
}

}  // namespace painformer::layers
