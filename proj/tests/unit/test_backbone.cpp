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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "painformer/backbone.hpp"
#include "painformer/error.hpp"
#include "painformer/kernels.hpp"
#include "support/oracles.hpp"

using namespace painformer;
using painformer::testing::random_tensor;

namespace {

// Closed-form scalar count written directly from the stage table.
std::size_t closed_form_count(const BackboneConfig& c) {
  const std::size_t r = c.mlp_ratio;
  std::size_t total = c.patch * c.patch * c.channels * c.stages[0].dim + c.stages[0].dim;
  std::size_t side = c.image_size / c.patch;
  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    const std::size_t d = c.stages[s].dim, grid = side * side * d;
    total += grid;
    const std::size_t mlp = 2 * d * r * d + r * d + d;
    total += c.stages[s].spectral_layers * (4 * d + 2 * grid + mlp + 9 * r * d + r * d);
    total += c.stages[s].attention_layers * (4 * d + 4 * d * d + d + mlp);
    if (s + 1 < c.stages.size()) total += 9 * d * c.stages[s + 1].dim + c.stages[s + 1].dim;
    side = (side + 1) / 2;
  }
  return total + 2 * c.stages.back().dim;
}

BackboneConfig tiny_config() {
  BackboneConfig c;
  c.image_size = 8;
  c.patch = 2;
  c.stages = {{1, 1, 2, 4}};
  return c;
}

const BackboneParams& default_params() {
  static const BackboneParams params = init_backbone(BackboneConfig::painformer(), 7);
  return params;
}

Tensor random_image(std::size_t side, std::uint64_t seed) {
  Tensor img = random_tensor({side, side, 3}, seed);
  for (double& v : img.data()) v = 0.5 + 0.5 * std::tanh(v);
  return img;
}

SpectralFilterVars ones_filter(ad::Tape& tape, const Shape& shape) {
  return {tape.constant(Tensor::full(shape, 1.0, DType::f64)), tape.constant(Tensor(shape, DType::f64))};
}

layers::AttentionVars attention_vars(ad::Tape& tape, std::size_t d, std::size_t heads,
                                     std::uint64_t seed) {
  return {tape.constant(random_tensor({d, d}, seed)),     tape.constant(random_tensor({d, d}, seed + 1)),
          tape.constant(random_tensor({d, d}, seed + 2)), tape.constant(random_tensor({d, d}, seed + 3)),
          tape.constant(random_tensor({d}, seed + 4)),    heads};
}

}  // namespace

TEST_SUITE("configuration") {
  TEST_CASE("default stage table") {
    const BackboneConfig c = BackboneConfig::painformer();
    REQUIRE(c.stages.size() == 4);
    CHECK(c.stages[0] == StageConfig{2, 1, 2, 64});
    CHECK(c.stages[1] == StageConfig{2, 2, 4, 128});
    CHECK(c.stages[2] == StageConfig{0, 12, 10, 320});
    CHECK(c.stages[3] == StageConfig{0, 3, 16, 160});
    CHECK(c.embedding_dim() == 160);
    CHECK(c.stage_resolutions() == std::vector<std::size_t>{14, 7, 4, 2});
  }

  TEST_CASE("invalid head count is rejected") {
    BackboneConfig c = tiny_config();
    c.stages[0].heads = 3;
    CHECK_THROWS_AS(init_backbone(c, 1), ContractViolation);
  }

  TEST_CASE("parameter count matches the closed form") {
    CHECK(init_backbone(tiny_config(), 1).parameter_count() == closed_form_count(tiny_config()));
    CHECK(init_backbone(BackboneConfig::toy(), 1).parameter_count() ==
          closed_form_count(BackboneConfig::toy()));
    const std::size_t count = default_params().parameter_count();
    CHECK(count == closed_form_count(BackboneConfig::painformer()));
    MESSAGE("default backbone parameters: " << count);
    CHECK(std::abs(static_cast<double>(count) / 19.60e6 - 1.0) <= 0.25);
  }
}

TEST_SUITE("patch embedding") {
  TEST_CASE("zero image gives positional encodings") {
    const BackboneParams& params = default_params();
    ad::Tape tape(DType::f64);
    BoundParameters p(tape, params.weights, false);
    ad::Var tokens = patch_embed(tape.constant(Tensor({224, 224, 3}, DType::f64)), p, params.config);
    CHECK(tokens.shape() == Shape{14, 14, 64});
    CHECK(max_abs_diff(tokens.value(), params.weights.at("stage0.pos")) == 0.0);
  }

  TEST_CASE("one changed patch changes one token") {
    const BackboneParams& params = default_params();
    Tensor a = random_image(224, 3), b = a;
    for (std::size_t y = 32; y < 48; ++y)
      for (std::size_t x = 80; x < 96; ++x) b.at(y, x, 1) = 1.0 - b.at(y, x, 1);
    ad::Tape tape(DType::f64);
    BoundParameters p(tape, params.weights, false);
    const Tensor ta = patch_embed(tape.constant(a), p, params.config).value();
    const Tensor tb = patch_embed(tape.constant(b), p, params.config).value();
    std::size_t changed = 0;
    for (std::size_t i = 0; i < 14; ++i)
      for (std::size_t j = 0; j < 14; ++j) {
        double diff = 0.0;
        for (std::size_t c = 0; c < 64; ++c) diff = std::max(diff, std::abs(ta.at(i, j, c) - tb.at(i, j, c)));
        if (diff > 0.0) {
          ++changed;
          CHECK(i == 2);
          CHECK(j == 5);
        }
      }
    CHECK(changed == 1);
  }

  TEST_CASE("wrong resolution is rejected") {
    const BackboneParams& params = default_params();
    ad::Tape tape(DType::f64);
    BoundParameters p(tape, params.weights, false);
    CHECK_THROWS_AS(patch_embed(tape.constant(Tensor({192, 192, 3})), p, params.config), ContractViolation);
    CHECK_THROWS_AS(patch_embed(tape.constant(Tensor({224, 224, 1})), p, params.config), ContractViolation);
  }
}

TEST_SUITE("spectral layer") {
  TEST_CASE("all-ones filter is the identity") {
    for (const auto& [side, dim] : std::vector<std::pair<std::size_t, std::size_t>>{{14, 64}, {7, 128}, {4, 2}, {5, 3}}) {
      ad::Tape tape(DType::f32);
      const FourierPlan plan(side, side);
      const Tensor z = random_tensor({side, side, dim}, side * 31 + dim, 1.0, DType::f32);
      const Tensor out = spectral_gate(tape.constant(z), ones_filter(tape, z.shape()), plan).value();
      CHECK(max_abs_diff(out, z) < 1e-6);
    }
  }

  TEST_CASE("stage-1 layer preserves shape") {
    const BackboneParams& params = default_params();
    ad::Tape tape(DType::f32);
    BoundParameters p(tape, params.weights, false);
    const std::string lp = "stage0.spectral0";
    const SpectralLayerVars layer{layers::bind_norm(p, lp + ".norm1"),
                                  {p(lp + ".filter.re"), p(lp + ".filter.im")},
                                  layers::bind_norm(p, lp + ".norm2"),
                                  layers::bind_mlp(p, lp + ".mlp", true)};
    const Tensor x = random_tensor({14, 14, 64}, 5);
    const Tensor y = spectral_layer_forward(tape.constant(x), layer, FourierPlan(14, 14), 0.0, {}).value();
    CHECK(y.shape() == Shape{14, 14, 64});
    CHECK(y.all_finite());
  }

  TEST_CASE("filter shape mismatch is rejected") {
    ad::Tape tape(DType::f64);
    const FourierPlan plan(4, 4);
    CHECK_THROWS_AS(spectral_gate(tape.constant(Tensor({4, 4, 2})), ones_filter(tape, {4, 4, 3}), plan),
                    ContractViolation);
  }

  TEST_CASE("gradient on a 4x4x2 grid matches finite differences") {
    Rng rng(11, "spectral.grad");
    ParameterSet ps;
    ps.add("x", random_tensor({4, 4, 2}, 1));
    ps.add("re", random_tensor({4, 4, 2}, 2));
    ps.add("im", random_tensor({4, 4, 2}, 3));
    layers::add_norm(ps, "n1", 2);
    layers::add_norm(ps, "n2", 2);
    layers::add_mlp(ps, "mlp", 2, 4, true, rng);
    const FourierPlan plan(4, 4);
    const double err = painformer::testing::parameter_gradient_check(
        [&](ad::Tape&, const BoundParameters& p) {
          const SpectralLayerVars layer{layers::bind_norm(p, "n1"), {p("re"), p("im")},
                                        layers::bind_norm(p, "n2"), layers::bind_mlp(p, "mlp", true)};
          return ad::sum(spectral_layer_forward(p("x"), layer, plan, 0.0, {}));
        },
        ps);
    CHECK(err < 1e-4);
  }
}

TEST_SUITE("self attention") {
  TEST_CASE("single token attends to itself") {
    ad::Tape tape(DType::f64);
    const layers::AttentionVars a = attention_vars(tape, 8, 2, 40);
    const Tensor token = random_tensor({1, 8}, 41);
    Tensor weights;
    const Tensor out = layers::multi_head_attention(tape.constant(token), tape.constant(token), a, &weights).value();
    for (double w : weights.data()) CHECK(w == 1.0);
    Tensor expected = kernels::matmul(kernels::matmul(token, a.wv.value()), a.wo.value());
    for (std::size_t c = 0; c < 8; ++c) expected[c] += a.bo.value()[c];
    CHECK(max_abs_diff(out, expected) < 1e-12);
  }

  TEST_CASE("random 4x8 input matches the loop oracle") {
    for (std::size_t heads : {1u, 2u, 4u}) {
      ad::Tape tape(DType::f64);
      const layers::AttentionVars a = attention_vars(tape, 8, heads, 50 + heads);
      const Tensor x = random_tensor({4, 8}, 60 + heads);
      const Tensor out = layers::multi_head_attention(tape.constant(x), tape.constant(x), a).value();

      const Tensor q = kernels::matmul(x, a.wq.value());
      const Tensor k = kernels::matmul(x, a.wk.value());
      const Tensor v = kernels::matmul(x, a.wv.value());
      const std::size_t hd = 8 / heads;
      Tensor merged({4, 8}, DType::f64);
      auto cols = [&](const Tensor& t, std::size_t h) {
        Tensor s({4, hd}, DType::f64);
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t c = 0; c < hd; ++c) s.at(i, c) = t.at(i, h * hd + c);
        return s;
      };
      for (std::size_t h = 0; h < heads; ++h) {
        const Tensor o = painformer::testing::attention_loops(cols(q, h), cols(k, h), cols(v, h));
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t c = 0; c < hd; ++c) merged.at(i, h * hd + c) = o.at(i, c);
      }
      Tensor expected = kernels::matmul(merged, a.wo.value());
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 8; ++c) expected.at(i, c) += a.bo.value()[c];
      CHECK(max_abs_diff(out, expected) < 1e-6);
    }
  }

  TEST_CASE("attention core is permutation equivariant") {
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    ad::Tape tape(DType::f64);
    const layers::AttentionVars a = attention_vars(tape, 8, 2, 70);
    const Tensor x = random_tensor({6, 8}, 71);
    Tensor xp({6, 8}, DType::f64);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 8; ++c) xp.at(i, c) = x.at(perm[i], c);
    const Tensor y = layers::multi_head_attention(tape.constant(x), tape.constant(x), a).value();
    const Tensor yp = layers::multi_head_attention(tape.constant(xp), tape.constant(xp), a).value();
    double worst = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 8; ++c) worst = std::max(worst, std::abs(yp.at(i, c) - y.at(perm[i], c)));
    CHECK(worst < 1e-12);
  }

  TEST_CASE("indivisible width is rejected") {
    ad::Tape tape(DType::f64);
    const layers::AttentionVars a = attention_vars(tape, 8, 3, 80);
    ad::Var x = tape.constant(random_tensor({2, 8}, 81));
    CHECK_THROWS_AS(layers::multi_head_attention(x, x, a), ContractViolation);
  }
}

TEST_SUITE("stages") {
  TEST_CASE("stage transitions follow the dimension pipeline") {
    const BackboneParams& params = default_params();
    ad::Tape tape(DType::f32);
    BoundParameters p(tape, params.weights, false);
    const std::vector<Shape> in{{14, 14, 64}, {7, 7, 128}, {4, 4, 320}, {2, 2, 160}};
    const std::vector<Shape> out{{7, 7, 128}, {4, 4, 320}, {2, 2, 160}, {2, 2, 160}};
    for (std::size_t s = 0; s < 4; ++s) {
      const Tensor y = stage_forward(tape.constant(random_tensor(in[s], 90 + s)), s, p, params.config, {}).value();
      CHECK(y.shape() == out[s]);
    }
    CHECK_THROWS_AS(stage_forward(tape.constant(Tensor({7, 7, 64})), 0, p, params.config, {}), ContractViolation);
  }

  TEST_CASE("degenerate stage is a pure downsample") {
    BackboneConfig c;
    c.image_size = 40;
    c.patch = 4;
    c.stages = {{0, 0, 1, 6}, {0, 0, 1, 5}};
    const BackboneParams params = init_backbone(c, 3);
    ParameterSet w = params.weights;
    w.at("stage0.down.bias") = random_tensor({5}, 4);
    ad::Tape tape(DType::f64);
    BoundParameters p(tape, w, false);
    const Tensor x = random_tensor({10, 10, 6}, 5);
    const Tensor y = stage_forward(tape.constant(x), 0, p, c, {}).value();
    const Tensor expected = painformer::testing::conv2d_bruteforce(x, w.at("stage0.down.weight"),
                                                                   w.at("stage0.down.bias"), 2, 1);
    REQUIRE(y.shape() == Shape{5, 5, 5});
    CHECK(max_abs_diff(y, expected) < 1e-12);
  }
}

TEST_SUITE("full backbone") {
  TEST_CASE("dimension pipeline and determinism") {
    const BackboneParams& params = default_params();
    const Tensor image = random_image(224, 100);
    BackboneTrace trace;
    const Tensor e1 = painformer_embed(params, image, &trace);
    const Tensor e2 = painformer_embed(params, image);
    const std::vector<Shape> expected{{14, 14, 64}, {7, 7, 128}, {4, 4, 320}, {2, 2, 160}, {2, 2, 160}, {160}};
    CHECK(trace.boundaries == expected);
    CHECK(e1.shape() == Shape{160});
    CHECK(e1.all_finite());
    CHECK(max_abs_diff(e1, e2) == 0.0);
    CHECK(trace.last_attention.shape() == Shape{16, 4, 4});
  }

  TEST_CASE("different images give different embeddings") {
    const BackboneParams& params = default_params();
    CHECK(max_abs_diff(painformer_embed(params, random_image(224, 1)),
                       painformer_embed(params, random_image(224, 2))) > 1e-4);
  }

  TEST_CASE("initialization is seeded") {
    const BackboneConfig c = BackboneConfig::toy();
    const BackboneParams a = init_backbone(c, 5), b = init_backbone(c, 5), d = init_backbone(c, 6);
    CHECK(max_abs_diff(a.weights.at("stage1.attn0.attn.wq"), b.weights.at("stage1.attn0.attn.wq")) == 0.0);
    CHECK(max_abs_diff(a.weights.at("stage1.attn0.attn.wq"), d.weights.at("stage1.attn0.attn.wq")) > 0.0);
  }

  TEST_CASE("tiny backbone gradient matches finite differences") {
    const BackboneConfig c = tiny_config();
    BackboneParams params = init_backbone(c, 21);
    // Non-trivial affines and biases so that every gradient path is exercised.
    for (const std::string& name : params.weights.names()) {
      Tensor& t = params.weights.at(name);
      if (t.rank() == 1) t = random_tensor(t.shape(), std::hash<std::string>{}(name), 0.3);
    }
    params.weights.add("image", random_image(8, 22));
    const double err = painformer::testing::parameter_gradient_check(
        [&](ad::Tape&, const BoundParameters& p) { return painformer_forward(p("image"), p, c); },
        params.weights);
    CHECK(err < 1e-4);
  }

  TEST_CASE("training mode with DropPath needs an rng") {
    const BackboneConfig c = tiny_config();
    const BackboneParams params = init_backbone(c, 1);
    ad::Tape tape(DType::f64);
    BoundParameters p(tape, params.weights, false);
    ForwardOptions opts{true, 0.5, nullptr};
    CHECK_THROWS_AS(painformer_forward(tape.constant(random_image(8, 1)), p, c, opts), ContractViolation);
    Rng rng(1, "droppath");
    opts.rng = &rng;
    CHECK(painformer_forward(tape.constant(random_image(8, 1)), p, c, opts).shape() == Shape{4});
  }
}

TEST_SUITE("attention maps") {
  TEST_CASE("map shape and range") {
    const BackboneParams& params = default_params();
    const Tensor map = attention_map(params, random_image(224, 9), 3);
    CHECK(map.shape() == Shape{224, 224});
    const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
    CHECK(*hi == doctest::Approx(1.0));
  }

  TEST_CASE("head out of range is rejected") {
    CHECK_THROWS_AS(attention_map(default_params(), random_image(224, 9), 16), ContractViolation);
  }

  TEST_CASE("uniform weights give an all-zero map") {
    const Tensor map = attention_heatmap(Tensor::full({4, 4}, 0.25, DType::f64), 2, 224);
    for (double v : map.data()) CHECK(v == 0.0);
  }

  TEST_CASE("corner-peaked source matches the bilinear oracle") {
    Tensor weights({4, 4}, DType::f64);
    for (std::size_t q = 0; q < 4; ++q) weights.at(q, 0) = 1.0;
    const Tensor map = attention_heatmap(weights, 2, 224);
    Tensor source({2, 2}, DType::f64);
    source.at(0, 0) = 1.0;
    Tensor expected({224, 224}, DType::f64);
    for (std::size_t y = 0; y < 224; ++y)
      for (std::size_t x = 0; x < 224; ++x)
        expected.at(y, x) = painformer::testing::bilinear_reference(source, 224, 224, y, x);
    const auto [lo, hi] = std::minmax_element(expected.data().begin(), expected.data().end());
    const double low = *lo, range = *hi - *lo;
    for (double& v : expected.data()) v = (v - low) / range;
    CHECK(max_abs_diff(map, expected) < 1e-6);
    CHECK(map.at(0, 0) == doctest::Approx(1.0));
    CHECK(map.at(223, 223) == doctest::Approx(0.0));
  }
}
