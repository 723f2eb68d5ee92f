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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "painformer/backbone.hpp"
#include "painformer/heads.hpp"
#include "painformer/params.hpp"
#include "painformer/tensor.hpp"

// Binary formats. All integers and scalars are little-endian; payloads are
// f32, so f64 tensors are rounded when written and come back tagged f32.
namespace painformer {

inline constexpr std::uint16_t kFormatVersion = 1;

// "PFEM" | u16 version | u8 dtype (0 = f32) | u8 rank | u32 dims[rank] | payload
std::vector<std::uint8_t> encode_pfem(const Tensor& embedding);
Tensor decode_pfem(std::span<const std::uint8_t> bytes);
void write_pfem(const std::filesystem::path& path, const Tensor& embedding);
Tensor read_pfem(const std::filesystem::path& path);

// "PFCK" | u16 version | u32 count | per tensor: u32 name length, name,
// u8 rank, u32 dims[rank], payload
std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet read_checkpoint(const std::filesystem::path& path);

// Model configurations travel inside checkpoints as small integer tensors
// named meta.backbone and meta.video_encoder; weights get a model prefix.
ParameterSet pack_backbone(const BackboneParams& model);
BackboneParams unpack_backbone(const ParameterSet& checkpoint);
ParameterSet pack_video_encoder(const VideoEncoderParams& model);
VideoEncoderParams unpack_video_encoder(const ParameterSet& checkpoint);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace painformer
