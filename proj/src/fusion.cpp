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


#include "painformer/fusion.hpp"

#include <cmath>
#include <numeric>

#include "painformer/error.hpp"
#include "painformer/rng.hpp"

namespace painformer {

namespace {

std::size_t common_length(std::span<const Tensor> items, const std::string& what) {
  require(!items.empty(), what + " needs at least one input");
  const std::size_t n = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i)
    require(items[i].size() == n, what + ": input " + std::to_string(i) + " has length " +
                                      std::to_string(items[i].size()) + ", expected " + std::to_string(n));
  return n;
}

Tensor flat(const Tensor& t) { return t.reshaped({t.size()}); }

}  // namespace

Tensor concat_frame_embeddings(std::span<const Tensor> frames) {
  const std::size_t width = common_length(frames, "frame concatenation");
  std::vector<double> out;
  out.reserve(width * frames.size());
  for (const Tensor& f : frames) out.insert(out.end(), f.data().begin(), f.data().end());
  const std::size_t n = out.size();
  return Tensor({n}, std::move(out), frames.front().dtype());
}

Tensor sum_frame_embeddings(std::span<const Tensor> frames) {
  const std::size_t width = common_length(frames, "frame summation");
  Tensor out({width}, frames.front().dtype());
  for (const Tensor& f : frames)
    for (std::size_t i = 0; i < width; ++i) out[i] += f[i];
  return out.round_to_dtype();
}

Tensor fuse_add(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "add fusion needs equal lengths, got " + std::to_string(a.size()) +
                                    " and " + std::to_string(b.size()));
  Tensor out = flat(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out.round_to_dtype();
}

Tensor FusedEmbedding::part(const std::string& source) const {
  for (const Provenance& p : provenance) {
    if (p.source != source) continue;
    const auto span = values.data().subspan(p.begin, p.length);
    return Tensor({p.length}, std::vector<double>(span.begin(), span.end()), values.dtype());
  }
  throw ContractViolation("fused embedding has no part from '" + source + "'");
}

FusedEmbedding fuse_concat(std::span<const EmbeddingPart> parts) {
  require(parts.size() >= 2, "concatenation fusion needs at least two parts");
  FusedEmbedding fused;
  std::vector<double> values;
  DType dtype = DType::f32;
  for (const EmbeddingPart& p : parts) {
    require(p.values.size() > 0, "fusion part '" + p.source + "' is empty");
    for (const Provenance& seen : fused.provenance)
      require(seen.source != p.source, "fusion part name '" + p.source + "' appears twice");
    if (p.values.dtype() == DType::f64) dtype = DType::f64;
    fused.provenance.push_back({p.source, values.size(), p.values.size()});
    values.insert(values.end(), p.values.data().begin(), p.values.data().end());
  }
  const std::size_t n = values.size();
  fused.values = Tensor({n}, std::move(values), dtype);
  return fused;
}

std::vector<EmbeddingPart> split_by_provenance(const FusedEmbedding& fused) {
  std::vector<EmbeddingPart> parts;
  for (const Provenance& p : fused.provenance) {
    require(p.begin + p.length <= fused.values.size(), "provenance span exceeds the fused vector");
    const auto span = fused.values.data().subspan(p.begin, p.length);
    parts.push_back({p.source, Tensor({p.length}, std::vector<double>(span.begin(), span.end()), fused.values.dtype())});
  }
  return parts;
}

Tensor fuse_decision(std::span<const Tensor> probabilities) {
  const std::size_t k = common_length(probabilities, "decision fusion");
  Tensor out({k}, DType::f64);
  for (std::size_t s = 0; s < probabilities.size(); ++s) {
    const Tensor& p = probabilities[s];
    double total = 0.0;
    for (double v : p.data()) {
      require(v >= 0.0, "decision fusion input " + std::to_string(s) + " has a negative probability");
      total += v;
    }
    require(std::abs(total - 1.0) <= 1e-6,
            "decision fusion input " + std::to_string(s) + " sums to " + std::to_string(total) + ", not 1");
    for (std::size_t i = 0; i < k; ++i) out[i] += p[i];
  }
  for (double& v : out.data()) v /= static_cast<double>(probabilities.size());
  return out;
}

FusedEmbedding multimodal_biovid_fuse(const Tensor& gsr, const Tensor& rgb, const Tensor& thermal,
                                      const Tensor& depth, const VideoEncoderParams& encoder) {
  require(gsr.size() == encoder.config.input_dim,
          "GSR embedding has length " + std::to_string(gsr.size()) + ", expected " +
              std::to_string(encoder.config.input_dim));
  require(rgb.size() == thermal.size() && rgb.size() == depth.size(),
          "video embeddings differ in length: rgb " + std::to_string(rgb.size()) + ", thermal " +
              std::to_string(thermal.size()) + ", depth " + std::to_string(depth.size()));
  const Tensor video = fuse_add(fuse_add(rgb, thermal), depth);
  const std::vector<EmbeddingPart> parts{{"gsr", flat(gsr)}, {"video", video_encode(encoder, video)}};
  return fuse_concat(parts);
}

Tensor as_tokens(const Tensor& flat_values, std::size_t width) {
  require(width > 0 && flat_values.size() > 0 && flat_values.size() % width == 0,
          "length " + std::to_string(flat_values.size()) + " is not a positive multiple of " + std::to_string(width));
  return flat_values.reshaped({flat_values.size() / width, width});
}

double adaptive_noise_std(const Tensor& e) {
  if (e.size() == 0) return 0.0;
  const auto values = e.data();
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(e.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return 0.05 * std::sqrt(var / static_cast<double>(e.size()));
}

Tensor augment_basic(const Tensor& e, double flip_prob, std::optional<double> noise_std, std::uint64_t seed) {
  require(flip_prob >= 0.0 && flip_prob <= 1.0, "flip probability must lie in [0, 1]");
  const double sigma = noise_std.value_or(adaptive_noise_std(e));
  require(sigma >= 0.0 && std::isfinite(sigma), "noise std must be nonnegative");
  Rng rng(seed, "augment.basic");
  const bool flip = rng.bernoulli(flip_prob);
  Tensor out = e;
  for (double& v : out.data()) {
    if (flip) v = -v;
    if (sigma > 0.0) v += sigma * rng.normal();
  }
  return out.round_to_dtype();
}

MaskBounds masking_bounds(std::size_t d) {
  require(d >= 10, "masking needs an embedding of at least 10 values");
  return {(d + 9) / 10, d / 5};
}

Tensor augment_masking(const Tensor& e, std::uint64_t seed, MaskSpan* span) {
  const MaskBounds bounds = masking_bounds(e.size());
  Rng rng(seed, "augment.masking");
  const std::size_t length = rng.integer(bounds.min_length, bounds.max_length);
  const std::size_t begin = rng.integer(0, e.size() - length);
  Tensor out = e;
  for (std::size_t i = begin; i < begin + length; ++i) out[i] = 0.0;
  if (span) *span = {begin, length};
  return out;
}

}  // namespace painformer
