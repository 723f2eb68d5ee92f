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


#include "painformer/heads.hpp"

#include "painformer/error.hpp"

namespace painformer {

namespace {

constexpr double kLatentStd = 0.02;

void add_cross_block(ParameterSet& w, const std::string& prefix, std::size_t latent_dim,
                     std::size_t input_dim, std::size_t ratio, Rng& rng) {
  layers::add_norm(w, prefix + ".latent_norm", latent_dim);
  layers::add_norm(w, prefix + ".input_norm", input_dim);
  layers::add_attention(w, prefix + ".attn", latent_dim, input_dim, latent_dim, rng);
  layers::add_norm(w, prefix + ".mlp_norm", latent_dim);
  layers::add_mlp(w, prefix + ".mlp", latent_dim, ratio, false, rng);
}

void add_self_block(ParameterSet& w, const std::string& prefix, std::size_t dim, std::size_t ratio,
                    Rng& rng) {
  layers::add_norm(w, prefix + ".norm1", dim);
  layers::add_attention(w, prefix + ".attn", dim, dim, dim, rng);
  layers::add_norm(w, prefix + ".norm2", dim);
  layers::add_mlp(w, prefix + ".mlp", dim, ratio, false, rng);
}

LatentBlockVars bind_latent_block(const BoundParameters& p, const std::string& prefix,
                                  std::size_t heads) {
  return {bind_cross_attention(p, prefix, heads), layers::bind_norm(p, prefix + ".mlp_norm"),
          layers::bind_mlp(p, prefix + ".mlp", false)};
}

SelfBlockVars bind_self_block(const BoundParameters& p, const std::string& prefix, std::size_t heads) {
  return {layers::bind_norm(p, prefix + ".norm1"), layers::bind_attention(p, prefix + ".attn", heads),
          layers::bind_norm(p, prefix + ".norm2"), layers::bind_mlp(p, prefix + ".mlp", false)};
}

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

// Final norm, mean over latents, then a linear projection.
ad::Var pool_and_project(ad::Var latents, const BoundParameters& p) {
  ad::Var pooled = ad::mean_rows(layers::norm(latents, layers::bind_norm(p, "out.norm")));
  return ad::linear(ad::reshape(pooled, {1, pooled.shape()[0]}), p("out.weight"), p("out.bias"));
}

ad::Var flatten(ad::Var row) { return ad::reshape(row, {row.value().size()}); }

}  // namespace

void MixerConfig::validate() const {
  require(layers > 0 && latents > 0 && latent_dim > 0 && input_dim > 0 && output_dim > 0,
          "mixer sizes must be positive");
  require(classes >= 2, "mixer needs at least two classes");
  require(cross_heads > 0 && latent_dim % cross_heads == 0, "latent width not divisible by cross heads");
  require(self_heads > 0 && latent_dim % self_heads == 0, "latent width not divisible by self heads");
  require(mlp_ratio > 0, "MLP ratio must be positive");
}

void VideoEncoderConfig::validate() const {
  require(layers > 0 && latents > 0 && latent_dim > 0 && input_dim > 0 && output_dim > 0 &&
              max_tokens > 0,
          "video encoder sizes must be positive");
  require(cross_heads > 0 && latent_dim % cross_heads == 0, "latent width not divisible by cross heads");
  require(mlp_ratio > 0, "MLP ratio must be positive");
}

MixerParams init_mixer(const MixerConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "mixer.init");
  ParameterSet w;
  w.add("latents", init_normal({config.latents, config.latent_dim}, kLatentStd, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string lp = layer_prefix(l);
    add_cross_block(w, lp + ".cross", config.latent_dim, config.input_dim, config.mlp_ratio, rng);
    for (std::size_t b = 0; b < config.self_blocks; ++b)
      add_self_block(w, lp + ".self" + std::to_string(b), config.latent_dim, config.mlp_ratio, rng);
  }
  layers::add_norm(w, "out.norm", config.latent_dim);
  w.add("out.weight", init_fan_in({config.latent_dim, config.output_dim}, rng));
  w.add("out.bias", Tensor({config.output_dim}, DType::f64));
  w.add("classifier.weight", init_fan_in({config.output_dim, config.classes}, rng));
  w.add("classifier.bias", Tensor({config.classes}, DType::f64));
  return {config, std::move(w)};
}

VideoEncoderParams init_video_encoder(const VideoEncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "video_encoder.init");
  ParameterSet w;
  w.add("latents", init_normal({config.latents, config.latent_dim}, kLatentStd, rng));
  w.add("input.pos", init_normal({config.max_tokens, config.input_dim}, kLatentStd, rng));
  for (std::size_t l = 0; l < config.layers; ++l)
    add_cross_block(w, layer_prefix(l) + ".cross", config.latent_dim, config.input_dim,
                    config.mlp_ratio, rng);
  layers::add_norm(w, "out.norm", config.latent_dim);
  w.add("out.weight", init_fan_in({config.latent_dim, config.output_dim}, rng));
  w.add("out.bias", Tensor({config.output_dim}, DType::f64));
  return {config, std::move(w)};
}

CrossAttentionVars bind_cross_attention(const BoundParameters& p, const std::string& prefix,
                                        std::size_t heads) {
  return {layers::bind_norm(p, prefix + ".latent_norm"), layers::bind_norm(p, prefix + ".input_norm"),
          layers::bind_attention(p, prefix + ".attn", heads)};
}

ad::Var cross_attention(ad::Var latents, ad::Var inputs, const CrossAttentionVars& vars,
                        Tensor* weights_out) {
  require(latents.value().rank() == 2 && inputs.value().rank() == 2,
          "cross attention expects [rows x width] latents and inputs");
  require(vars.input_norm.gamma.shape()[0] == inputs.shape()[1],
          "input width " + std::to_string(inputs.shape()[1]) + " does not match the key/value projection width " +
              std::to_string(vars.input_norm.gamma.shape()[0]));
  require(vars.latent_norm.gamma.shape()[0] == latents.shape()[1],
          "latent width " + std::to_string(latents.shape()[1]) + " does not match the query projection width " +
              std::to_string(vars.latent_norm.gamma.shape()[0]));
  ad::Var core = layers::multi_head_attention(layers::norm(latents, vars.latent_norm),
                                              layers::norm(inputs, vars.input_norm), vars.attention,
                                              weights_out);
  return ad::add(latents, core);
}

ad::Var latent_block_forward(ad::Var latents, ad::Var inputs, const LatentBlockVars& block,
                             Tensor* weights_out) {
  ad::Var x = cross_attention(latents, inputs, block.cross, weights_out);
  return ad::add(x, layers::mlp(layers::norm(x, block.mlp_norm), block.mlp));
}

ad::Var self_block_forward(ad::Var latents, const SelfBlockVars& block) {
  ad::Var xn = layers::norm(latents, block.norm1);
  ad::Var x = ad::add(latents, layers::multi_head_attention(xn, xn, block.attention));
  return ad::add(x, layers::mlp(layers::norm(x, block.norm2), block.mlp));
}

MixerOutput embedding_mixer_forward(ad::Var tokens, const BoundParameters& p, const MixerConfig& config) {
  require(tokens.value().rank() == 2 && tokens.shape()[0] > 0, "mixer needs a non-empty token sequence");
  require(tokens.shape()[1] == config.input_dim,
          "mixer expects tokens of width " + std::to_string(config.input_dim) + ", got " +
              std::to_string(tokens.shape()[1]));
  ad::Var x = p("latents");
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string lp = layer_prefix(l);
    x = latent_block_forward(x, tokens, bind_latent_block(p, lp + ".cross", config.cross_heads));
    for (std::size_t b = 0; b < config.self_blocks; ++b)
      x = self_block_forward(x, bind_self_block(p, lp + ".self" + std::to_string(b), config.self_heads));
  }
  ad::Var embedding = pool_and_project(x, p);
  ad::Var logits = ad::linear(embedding, p("classifier.weight"), p("classifier.bias"));
  return {flatten(embedding), flatten(logits)};
}

ad::Var video_encoder_forward(ad::Var unified, const BoundParameters& p, const VideoEncoderConfig& config) {
  const std::size_t length = unified.value().size();
  require(length > 0 && length % config.input_dim == 0,
          "video encoder input length " + std::to_string(length) + " is not a multiple of " +
              std::to_string(config.input_dim));
  const std::size_t tokens = length / config.input_dim;
  require(tokens <= config.max_tokens, "video encoder input has " + std::to_string(tokens) +
                                           " tokens, more than the " + std::to_string(config.max_tokens) +
                                           " supported");
  ad::Var pos = p("input.pos");
  if (tokens < config.max_tokens) pos = ad::slice_rows(pos, 0, tokens);
  ad::Var x = p("latents");
  ad::Var inputs = ad::add(ad::reshape(unified, {tokens, config.input_dim}), pos);
  for (std::size_t l = 0; l < config.layers; ++l)
    x = latent_block_forward(x, inputs, bind_latent_block(p, layer_prefix(l) + ".cross", config.cross_heads));
  return flatten(pool_and_project(x, p));
}

MixerResult mixer_evaluate(const MixerParams& params, const Tensor& tokens) {
  ad::Tape tape(DType::f32);
  BoundParameters p(tape, params.weights, false);
  const MixerOutput out = embedding_mixer_forward(tape.constant(tokens), p, params.config);
  return {out.embedding.value(), out.logits.value()};
}

Tensor video_encode(const VideoEncoderParams& params, const Tensor& unified) {
  ad::Tape tape(DType::f32);
  BoundParameters p(tape, params.weights, false);
  return video_encoder_forward(tape.constant(unified), p, params.config).value();
}

}  // namespace painformer
