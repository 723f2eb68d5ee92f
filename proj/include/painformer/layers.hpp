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
#include <string>
#include <vector>

#include "painformer/autodiff.hpp"
#include "painformer/params.hpp"

// Transformer building blocks shared by the backbone and the attention heads.
namespace painformer::layers {

struct NormVars {
  ad::Var gamma;
  ad::Var beta;
};

// W_2 . GELU([DWConv](W_1 . x + b_1)) + b_2. The depthwise pair is only
// present in the spectral-layer variant.
struct MlpVars {
  ad::Var w1, b1, w2, b2;
  ad::Var dw_kernels, dw_bias;

  bool has_depthwise() const { return dw_kernels.valid(); }
};

// Query/key/value projections (no bias) and an output projection with bias.
// wq maps the query width to d; wk and wv map the key/value width to d.
struct AttentionVars {
  ad::Var wq, wk, wv, wo, bo;
  std::size_t heads = 1;
};

NormVars bind_norm(const BoundParameters& p, const std::string& prefix);
MlpVars bind_mlp(const BoundParameters& p, const std::string& prefix, bool depthwise);
AttentionVars bind_attention(const BoundParameters& p, const std::string& prefix, std::size_t heads);

void add_norm(ParameterSet& params, const std::string& prefix, std::size_t dim);
void add_mlp(ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t ratio,
             bool depthwise, Rng& rng);
void add_attention(ParameterSet& params, const std::string& prefix, std::size_t query_dim,
                   std::size_t kv_dim, std::size_t dim, Rng& rng);

ad::Var norm(ad::Var x, const NormVars& n);

// x: [N x d] rows, or [h x w x d] when the MLP carries a depthwise conv.
ad::Var mlp(ad::Var x, const MlpVars& m);

// Attention core: softmax(Q K^T / sqrt(d_head)) V per head, concatenated and
// projected by wo. queries: [n x dq], context: [N x dkv]. When
// `weights_out` is non-null it receives the per-head weights as [H x n x N].
ad::Var multi_head_attention(ad::Var queries, ad::Var context, const AttentionVars& a,
                             Tensor* weights_out = nullptr);

}  // namespace painformer::layers
