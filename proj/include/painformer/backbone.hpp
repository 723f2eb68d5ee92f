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
#include <optional>
#include <string>
#include <vector>

#include "painformer/autodiff.hpp"
#include "painformer/fft.hpp"
#include "painformer/layers.hpp"
#include "painformer/params.hpp"
#include "painformer/rng.hpp"

namespace painformer {

struct StageConfig {
  std::size_t spectral_layers = 0;
  std::size_t attention_layers = 0;
  std::size_t heads = 1;
  std::size_t dim = 0;

  bool operator==(const StageConfig&) const = default;
};

struct BackboneConfig {
  std::size_t image_size = 224;
  std::size_t patch = 16;
  std::size_t channels = 3;
  std::size_t mlp_ratio = 4;
  std::vector<StageConfig> stages;

  // Four stages: (2,1,2,64), (2,2,4,128), (0,12,10,320), (0,3,16,160).
  static BackboneConfig painformer();
  // Shrunken four-stage model on 32x32 inputs with 4x4 patches.
  static BackboneConfig toy();

  std::size_t embedding_dim() const { return stages.back().dim; }
  // Token-grid side length on entry to each stage.
  std::vector<std::size_t> stage_resolutions() const;
  std::size_t total_layers() const;
  void validate() const;

  bool operator==(const BackboneConfig&) const = default;
};

struct BackboneParams {
  BackboneConfig config;
  ParameterSet weights;

  std::size_t parameter_count() const { return weights.scalar_count(); }
};

BackboneParams init_backbone(const BackboneConfig& config, std::uint64_t seed);

struct ForwardOptions {
  bool training = false;
  // Largest DropPath rate, reached at the deepest layer; earlier layers scale linearly.
  double drop_path = 0.0;
  Rng* rng = nullptr;
};

// Records what a forward pass saw. Filled only when passed in.
struct BackboneTrace {
  // Token-grid shape at each boundary: after patch embedding, after each
  // stage, and finally the pooled embedding.
  std::vector<Shape> boundaries;
  // Per-head weights [H x N x N] of the last attention layer of the last stage.
  Tensor last_attention;
  std::size_t last_grid_side = 0;
};

// The learnable complex gate of one spectral layer.
struct SpectralFilterVars {
  ad::Var re;
  ad::Var im;
};

struct SpectralLayerVars {
  layers::NormVars norm1;
  SpectralFilterVars filter;
  layers::NormVars norm2;
  layers::MlpVars mlp;
};

struct AttentionLayerVars {
  layers::NormVars norm1;
  layers::AttentionVars attention;
  layers::NormVars norm2;
  layers::MlpVars mlp;
};

// image [S x S x C] -> token grid [S/p x S/p x d0] with stage-1 positional encoding added.
ad::Var patch_embed(ad::Var image, const BoundParameters& p, const BackboneConfig& config);

// Re(IFFT(K . FFT(z))) over the two spatial axes of z [h x w x d].
ad::Var spectral_gate(ad::Var z, const SpectralFilterVars& filter, const FourierPlan& plan);

// x + gate(norm1(x)), then + MLP(norm2(.)) with the depthwise MLP variant.
ad::Var spectral_layer_forward(ad::Var x, const SpectralLayerVars& layer, const FourierPlan& plan,
                               double drop_path, const ForwardOptions& options);

// x [N x d]: x + Att(norm1(x)), then + MLP(norm2(.)).
ad::Var self_attention_forward(ad::Var x, const AttentionLayerVars& layer, double drop_path,
                               const ForwardOptions& options, Tensor* weights_out = nullptr);

// One stage: positional encoding (stages after the first), spectral layers,
// attention layers on the flattened grid, then the stride-2 transition conv
// into the next stage's width (all but the last stage).
ad::Var stage_forward(ad::Var x, std::size_t stage, const BoundParameters& p,
                      const BackboneConfig& config, const ForwardOptions& options,
                      BackboneTrace* trace = nullptr);

// Full backbone: image -> pooled embedding [embedding_dim].
ad::Var painformer_forward(ad::Var image, const BoundParameters& p, const BackboneConfig& config,
                           const ForwardOptions& options = {}, BackboneTrace* trace = nullptr);

// Eval-mode embedding of one image on a private f32 tape.
Tensor painformer_embed(const BackboneParams& params, const Tensor& image,
                        BackboneTrace* trace = nullptr);

// Mean over query rows of one head's [N x N] weights, laid out on the
// side x side grid, bilinearly resized and min-max normalized to [0,1]. A
// flat map normalizes to all zeros.
Tensor attention_heatmap(const Tensor& head_weights, std::size_t side, std::size_t out_size);

// Heat map of last-stage attention head `head`, resized to `out_size` (the
// input resolution when 0).
Tensor attention_map(const BackboneParams& params, const Tensor& image, std::size_t head,
                     std::size_t out_size = 0);

}  // namespace painformer
