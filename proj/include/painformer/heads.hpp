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
#include <cstdint>
#include <string>

#include "painformer/autodiff.hpp"
#include "painformer/layers.hpp"
#include "painformer/params.hpp"

namespace painformer {

// Latent cross-attention classifier over a sequence of embeddings.
struct MixerConfig {
  std::size_t layers = 2;
  std::size_t cross_heads = 1;
  std::size_t self_heads = 8;
  std::size_t self_blocks = 2;
  std::size_t latents = 256;
  std::size_t latent_dim = 384;
  std::size_t input_dim = 160;
  std::size_t output_dim = 512;
  std::size_t classes = 2;
  std::size_t mlp_ratio = 4;

  void validate() const;
  bool operator==(const MixerConfig&) const = default;
};

// Single cross-attention reducer from a long token sequence to a short code.
struct VideoEncoderConfig {
  std::size_t layers = 1;
  std::size_t cross_heads = 1;
  std::size_t latents = 256;
  std::size_t latent_dim = 512;
  std::size_t input_dim = 160;
  // Rows of the learnable input positional table; longer inputs are rejected.
  std::size_t max_tokens = 138;
  std::size_t output_dim = 40;
  std::size_t mlp_ratio = 4;

  void validate() const;
  bool operator==(const VideoEncoderConfig&) const = default;
};

struct MixerParams {
  MixerConfig config;
  ParameterSet weights;
  std::size_t parameter_count() const { return weights.scalar_count(); }
};

struct VideoEncoderParams {
  VideoEncoderConfig config;
  ParameterSet weights;
  std::size_t parameter_count() const { return weights.scalar_count(); }
};

MixerParams init_mixer(const MixerConfig& config, std::uint64_t seed);
VideoEncoderParams init_video_encoder(const VideoEncoderConfig& config, std::uint64_t seed);

struct CrossAttentionVars {
  layers::NormVars latent_norm;
  layers::NormVars input_norm;
  layers::AttentionVars attention;
};

struct LatentBlockVars {
  CrossAttentionVars cross;
  layers::NormVars mlp_norm;
  layers::MlpVars mlp;
};

struct SelfBlockVars {
  layers::NormVars norm1;
  layers::AttentionVars attention;
  layers::NormVars norm2;
  layers::MlpVars mlp;
};

CrossAttentionVars bind_cross_attention(const BoundParameters& p, const std::string& prefix,
                                        std::size_t heads);

// latents + Attention(queries = LN(latents), keys/values = LN(inputs)).
// `weights_out` receives the [heads x n x N] attention weights.
ad::Var cross_attention(ad::Var latents, ad::Var inputs, const CrossAttentionVars& vars,
                        Tensor* weights_out = nullptr);

ad::Var latent_block_forward(ad::Var latents, ad::Var inputs, const LatentBlockVars& block,
                             Tensor* weights_out = nullptr);
ad::Var self_block_forward(ad::Var latents, const SelfBlockVars& block);

struct MixerOutput {
  ad::Var embedding;
  ad::Var logits;
};

MixerOutput embedding_mixer_forward(ad::Var tokens, const BoundParameters& p, const MixerConfig& config);

// Reshapes a flat unified embedding into rows of `input_dim` and encodes it.
ad::Var video_encoder_forward(ad::Var unified, const BoundParameters& p,
                              const VideoEncoderConfig& config);

struct MixerResult {
  Tensor embedding;
  Tensor logits;
};

MixerResult mixer_evaluate(const MixerParams& params, const Tensor& tokens);
Tensor video_encode(const VideoEncoderParams& params, const Tensor& unified);

}  // namespace painformer
