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
#include <span>
#include <string>
#include <vector>

#include "painformer/heads.hpp"
#include "painformer/tensor.hpp"

namespace painformer {

inline constexpr std::size_t kEmbeddingDim = 160;

// Frame-order concatenation: element j*width + k is frame j, element k.
Tensor concat_frame_embeddings(std::span<const Tensor> frames);
// Elementwise sum over frames (or fNIRS channels).
Tensor sum_frame_embeddings(std::span<const Tensor> frames);

Tensor fuse_add(const Tensor& a, const Tensor& b);

struct EmbeddingPart {
  std::string source;
  Tensor values;
};

struct Provenance {
  std::string source;
  std::size_t begin = 0;
  std::size_t length = 0;

  bool operator==(const Provenance&) const = default;
};

struct FusedEmbedding {
  Tensor values;
  std::vector<Provenance> provenance;

  // Values contributed by `source`; throws if absent.
  Tensor part(const std::string& source) const;
};

FusedEmbedding fuse_concat(std::span<const EmbeddingPart> parts);
std::vector<EmbeddingPart> split_by_provenance(const FusedEmbedding& fused);

// Mean of probability vectors; each must be nonnegative and sum to 1.
Tensor fuse_decision(std::span<const Tensor> probabilities);

// GSR embedding followed by the encoded sum of three video embeddings.
FusedEmbedding multimodal_biovid_fuse(const Tensor& gsr, const Tensor& rgb, const Tensor& thermal,
                                      const Tensor& depth, const VideoEncoderParams& encoder);

// Rows of `width` values, the token layout fed to the Embedding-Mixer.
Tensor as_tokens(const Tensor& flat, std::size_t width = kEmbeddingDim);

// 0.05 times the population standard deviation of `e`.
double adaptive_noise_std(const Tensor& e);

// Negates the whole vector with probability `flip_prob`, then adds
// N(0, noise_std^2) noise; noise_std defaults to adaptive_noise_std(e).
Tensor augment_basic(const Tensor& e, double flip_prob, std::optional<double> noise_std, std::uint64_t seed);

struct MaskSpan {
  std::size_t begin = 0;
  std::size_t length = 0;
};

struct MaskBounds {
  std::size_t min_length = 0;  // ceil(0.10 d)
  std::size_t max_length = 0;  // floor(0.20 d)
};

MaskBounds masking_bounds(std::size_t d);

// Zeroes one contiguous span whose length is uniform over masking_bounds(d).
Tensor augment_masking(const Tensor& e, std::uint64_t seed, MaskSpan* span = nullptr);

}  // namespace painformer
