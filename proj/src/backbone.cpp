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

#include "painformer/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "painformer/error.hpp"
#include "painformer/kernels.hpp"

namespace painformer {

namespace {

std::string stage_prefix(std::size_t s) { return "stage" + std::to_string(s); }

std::size_t halve(std::size_t side) { return kernels::conv_output_size(side, 3, 2, 1); }

SpectralLayerVars bind_spectral(const BoundParameters& p, const std::string& prefix) {
  return {layers::bind_norm(p, prefix + ".norm1"),
          {p(prefix + ".filter.re"), p(prefix + ".filter.im")},
          layers::bind_norm(p, prefix + ".norm2"),
          layers::bind_mlp(p, prefix + ".mlp", true)};
}

AttentionLayerVars bind_attention_layer(const BoundParameters& p, const std::string& prefix,
                                        std::size_t heads) {
  return {layers::bind_norm(p, prefix + ".norm1"), layers::bind_attention(p, prefix + ".attn", heads),
          layers::bind_norm(p, prefix + ".norm2"), layers::bind_mlp(p, prefix + ".mlp", false)};
}

// Index of the first layer of `stage` in depth order.
std::size_t layer_offset(const BackboneConfig& config, std::size_t stage) {
  std::size_t offset = 0;
  for (std::size_t s = 0; s < stage; ++s)
    offset += config.stages[s].spectral_layers + config.stages[s].attention_layers;
  return offset;
}

double layer_drop_rate(const ForwardOptions& options, std::size_t layer, std::size_t total) {
  if (total <= 1) return options.drop_path;
  return options.drop_path * static_cast<double>(layer) / static_cast<double>(total - 1);
}

ad::Var residual(ad::Var x, ad::Var branch, double drop_path, const ForwardOptions& options) {
  if (options.training && drop_path > 0.0) {
    require(options.rng != nullptr, "training with DropPath needs an rng");
    branch = ad::droppath(branch, drop_path, *options.rng, true);
  }
  return ad::add(x, branch);
}

}  // namespace

BackboneConfig BackboneConfig::painformer() {
  BackboneConfig c;
  c.stages = {{2, 1, 2, 64}, {2, 2, 4, 128}, {0, 12, 10, 320}, {0, 3, 16, 160}};
  return c;
}

BackboneConfig BackboneConfig::toy() {
  BackboneConfig c;
  c.image_size = 32;
  c.patch = 4;
  c.stages = {{1, 1, 2, 16}, {1, 1, 2, 32}, {0, 1, 2, 48}, {0, 1, 2, 32}};
  return c;
}

std::vector<std::size_t> BackboneConfig::stage_resolutions() const {
  std::vector<std::size_t> sides;
  std::size_t side = image_size / patch;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    sides.push_back(side);
    side = halve(side);
  }
  return sides;
}

std::size_t BackboneConfig::total_layers() const { return layer_offset(*this, stages.size()); }

void BackboneConfig::validate() const {
  require(!stages.empty(), "backbone needs at least one stage");
  require(patch > 0 && image_size % patch == 0, "image size must be a multiple of the patch size");
  require(channels > 0 && mlp_ratio > 0, "channels and MLP ratio must be positive");
  for (const StageConfig& s : stages) {
    require(s.dim > 0, "stage width must be positive");
    require(s.heads > 0 && s.dim % s.heads == 0,
            "stage width " + std::to_string(s.dim) + " not divisible by " + std::to_string(s.heads) + " heads");
  }
}

BackboneParams init_backbone(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "backbone.init");
  ParameterSet w;
  const std::size_t patch_width = config.patch * config.patch * config.channels;
  const std::vector<std::size_t> sides = config.stage_resolutions();
  w.add("patch.weight", init_fan_in({patch_width, config.stages[0].dim}, rng));
  w.add("patch.bias", Tensor({config.stages[0].dim}, DType::f64));

  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& st = config.stages[s];
    const std::size_t side = sides[s];
    const std::string sp = stage_prefix(s);
    w.add(sp + ".pos", init_normal({side, side, st.dim}, 0.02, rng));
    for (std::size_t l = 0; l < st.spectral_layers; ++l) {
      const std::string lp = sp + ".spectral" + std::to_string(l);
      layers::add_norm(w, lp + ".norm1", st.dim);
      Tensor re = init_normal({side, side, st.dim}, 0.02, rng);
      for (double& v : re.data()) v += 1.0;
      w.add(lp + ".filter.re", std::move(re));
      w.add(lp + ".filter.im", init_normal({side, side, st.dim}, 0.02, rng));
      layers::add_norm(w, lp + ".norm2", st.dim);
      layers::add_mlp(w, lp + ".mlp", st.dim, config.mlp_ratio, true, rng);
    }
    for (std::size_t l = 0; l < st.attention_layers; ++l) {
      const std::string lp = sp + ".attn" + std::to_string(l);
      layers::add_norm(w, lp + ".norm1", st.dim);
      layers::add_attention(w, lp + ".attn", st.dim, st.dim, st.dim, rng);
      layers::add_norm(w, lp + ".norm2", st.dim);
      layers::add_mlp(w, lp + ".mlp", st.dim, config.mlp_ratio, false, rng);
    }
    if (s + 1 < config.stages.size()) {
      const std::size_t next = config.stages[s + 1].dim;
      w.add(sp + ".down.weight", init_fan_in({3, 3, st.dim, next}, rng));
      w.add(sp + ".down.bias", Tensor({next}, DType::f64));
    }
  }
  layers::add_norm(w, "head.norm", config.embedding_dim());
  return {config, std::move(w)};
}

ad::Var patch_embed(ad::Var image, const BoundParameters& p, const BackboneConfig& config) {
  const Shape expected{config.image_size, config.image_size, config.channels};
  require(image.shape() == expected, "patch_embed expects an image of shape " +
                                         shape_string(expected) + ", got " +
                                         shape_string(image.shape()));
  const std::size_t side = config.image_size / config.patch;
  ad::Var tokens = ad::linear(ad::patchify(image, config.patch), p("patch.weight"), p("patch.bias"));
  tokens = ad::reshape(tokens, {side, side, config.stages[0].dim});
  return ad::add(tokens, p(stage_prefix(0) + ".pos"));
}

ad::Var spectral_gate(ad::Var z, const SpectralFilterVars& filter, const FourierPlan& plan) {
  require(filter.re.shape() == z.shape() && filter.im.shape() == z.shape(),
          "spectral filter shape " + shape_string(filter.re.shape()) + " does not match tokens " +
              shape_string(z.shape()));
  ad::ComplexVar spectrum = ad::fft2(ad::to_complex(z), plan);
  ad::ComplexVar gated = ad::complex_mul(ad::make_complex(filter.re, filter.im), spectrum);
  return ad::real_part(ad::ifft2(gated, plan));
}

ad::Var spectral_layer_forward(ad::Var x, const SpectralLayerVars& layer, const FourierPlan& plan,
                               double drop_path, const ForwardOptions& options) {
  require(x.value().rank() == 3, "spectral layer expects an [h,w,d] token grid");
  ad::Var mixed = spectral_gate(layers::norm(x, layer.norm1), layer.filter, plan);
  ad::Var y = residual(x, mixed, drop_path, options);
  return residual(y, layers::mlp(layers::norm(y, layer.norm2), layer.mlp), drop_path, options);
}

ad::Var self_attention_forward(ad::Var x, const AttentionLayerVars& layer, double drop_path,
                               const ForwardOptions& options, Tensor* weights_out) {
  ad::Var xn = layers::norm(x, layer.norm1);
  ad::Var y = residual(x, layers::multi_head_attention(xn, xn, layer.attention, weights_out),
                       drop_path, options);
  return residual(y, layers::mlp(layers::norm(y, layer.norm2), layer.mlp), drop_path, options);
}

ad::Var stage_forward(ad::Var x, std::size_t stage, const BoundParameters& p,
                      const BackboneConfig& config, const ForwardOptions& options,
                      BackboneTrace* trace) {
  require(stage < config.stages.size(), "stage index out of range");
  const StageConfig& st = config.stages[stage];
  const std::string sp = stage_prefix(stage);
  const std::size_t side = config.stage_resolutions()[stage];
  require(x.shape() == Shape{side, side, st.dim},
          sp + " expects tokens " + shape_string({side, side, st.dim}) + ", got " +
              shape_string(x.shape()));
  if (stage > 0) x = ad::add(x, p(sp + ".pos"));

  const std::size_t total = config.total_layers();
  std::size_t layer = layer_offset(config, stage);
  if (st.spectral_layers > 0) {
    const FourierPlan plan(side, side);
    for (std::size_t l = 0; l < st.spectral_layers; ++l, ++layer) {
      x = spectral_layer_forward(x, bind_spectral(p, sp + ".spectral" + std::to_string(l)), plan,
                                 layer_drop_rate(options, layer, total), options);
    }
  }
  if (st.attention_layers > 0) {
    ad::Var seq = ad::reshape(x, {side * side, st.dim});
    const bool last_stage = stage + 1 == config.stages.size();
    for (std::size_t l = 0; l < st.attention_layers; ++l, ++layer) {
      const bool capture = trace && last_stage && l + 1 == st.attention_layers;
      seq = self_attention_forward(seq, bind_attention_layer(p, sp + ".attn" + std::to_string(l), st.heads),
                                   layer_drop_rate(options, layer, total), options,
                                   capture ? &trace->last_attention : nullptr);
      if (capture) trace->last_grid_side = side;
    }
    x = ad::reshape(seq, {side, side, st.dim});
  }
  if (stage + 1 < config.stages.size()) {
    x = ad::conv2d(x, p(sp + ".down.weight"), p(sp + ".down.bias"), 2, 1);
  }
  return x;
}

ad::Var painformer_forward(ad::Var image, const BoundParameters& p, const BackboneConfig& config,
                           const ForwardOptions& options, BackboneTrace* trace) {
  ad::Var x = patch_embed(image, p, config);
  if (trace) trace->boundaries.push_back(x.shape());
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    x = stage_forward(x, s, p, config, options, trace);
    if (trace) trace->boundaries.push_back(x.shape());
  }
  const std::size_t dim = config.embedding_dim();
  ad::Var tokens = ad::reshape(x, {x.value().size() / dim, dim});
  ad::Var pooled = ad::mean_rows(layers::norm(tokens, layers::bind_norm(p, "head.norm")));
  if (trace) trace->boundaries.push_back(pooled.shape());
  return pooled;
}

Tensor painformer_embed(const BackboneParams& params, const Tensor& image, BackboneTrace* trace) {
  ad::Tape tape(DType::f32);
  BoundParameters p(tape, params.weights, false);
  return painformer_forward(tape.constant(image), p, params.config, {}, trace).value();
}

Tensor attention_heatmap(const Tensor& head_weights, std::size_t side, std::size_t out_size) {
  require(head_weights.rank() == 2 && head_weights.dim(1) == side * side,
          "attention weights do not match a " + std::to_string(side) + "x" + std::to_string(side) + " grid");
  const std::size_t queries = head_weights.dim(0);
  Tensor grid({side, side}, DType::f64);
  for (std::size_t q = 0; q < queries; ++q)
    for (std::size_t k = 0; k < side * side; ++k) grid[k] += head_weights.at(q, k);
  for (double& v : grid.data()) v /= static_cast<double>(queries);

  Tensor map = kernels::bilinear_resize(grid, out_size, out_size);
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double low = *lo, range = *hi - *lo;
  if (range <= 1e-12 * std::max(1.0, std::abs(*hi))) {
    map.fill(0.0);
    return map;
  }
  for (double& v : map.data()) v = std::clamp((v - low) / range, 0.0, 1.0);
  return map;
}

Tensor attention_map(const BackboneParams& params, const Tensor& image, std::size_t head,
                     std::size_t out_size) {
  const StageConfig& last = params.config.stages.back();
  require(last.attention_layers > 0, "the last stage has no attention layers");
  require(head < last.heads, "head " + std::to_string(head) + " out of range for " +
                                 std::to_string(last.heads) + " heads");
  BackboneTrace trace;
  painformer_embed(params, image, &trace);
  const std::size_t n = trace.last_grid_side * trace.last_grid_side;
  Tensor weights({n, n}, DType::f64);
  std::copy_n(trace.last_attention.data().begin() + head * n * n, n * n, weights.data().begin());
  return attention_heatmap(weights, trace.last_grid_side, out_size ? out_size : params.config.image_size);
}

}  // namespace painformer
