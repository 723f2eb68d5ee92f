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


#include "painformer/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "painformer/error.hpp"

namespace painformer {
namespace {

constexpr char kEmbeddingMagic[4] = {'P', 'F', 'E', 'M'};
constexpr char kCheckpointMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  void magic(const char (&m)[4]) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { little(v, 2); }
  void u32(std::uint32_t v) { little(v, 4); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void text(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void shape(const Shape& shape) {
    require(shape.size() <= std::numeric_limits<std::uint8_t>::max(), "tensor rank does not fit a u8");
    u8(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) {
      require(d <= std::numeric_limits<std::uint32_t>::max(), "tensor dimension does not fit a u32");
      u32(static_cast<std::uint32_t>(d));
    }
  }
  void payload(const Tensor& t) {
    for (double v : t.data()) f32(v);
  }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void little(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  void magic(const char (&m)[4]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw IoError(std::string("not a ") + what_ + " file (bad magic)");
    pos_ += 4;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(little(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(little(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void version() {
    const std::uint16_t v = u16();
    if (v != kFormatVersion)
      throw IoError(std::string(what_) + " version " + std::to_string(v) + " is not supported");
  }
  Shape shape() {
    Shape s(u8());
    for (std::size_t& d : s) d = u32();
    return s;
  }
  Tensor payload(Shape shape) {
    const std::size_t n = shape_size(shape);
    if (n > remaining() / 4) throw IoError(std::string(what_) + " payload is truncated");
    Tensor t(std::move(shape), DType::f32);
    for (double& v : t.data()) v = f32();
    return t;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  void finish() const {
    if (remaining() != 0)
      throw IoError(std::string(what_) + " has " + std::to_string(remaining()) + " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw IoError(std::string(what_) + " is truncated");
  }
  std::uint64_t little(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

Tensor integer_tensor(const std::vector<std::size_t>& values) {
  Tensor t({values.size()}, DType::f32);
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<double>(values[i]);
  return t;
}

std::vector<std::size_t> integers_of(const ParameterSet& checkpoint, const std::string& name) {
  if (!checkpoint.contains(name)) throw IoError("checkpoint has no " + name + " entry");
  std::vector<std::size_t> out;
  for (double v : checkpoint.at(name).data()) {
    if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw IoError(name + " holds a non-integer value");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Loads the weights under `prefix` and checks them against a freshly
// initialized model of the same configuration.
ParameterSet checked_weights(const ParameterSet& checkpoint, const std::string& prefix, const ParameterSet& fresh) {
  ParameterSet weights = checkpoint.extract(prefix);
  if (weights.size() != fresh.size())
    throw IoError("checkpoint holds " + std::to_string(weights.size()) + " " + prefix + " tensors, expected " +
                  std::to_string(fresh.size()));
  for (const std::string& name : fresh.names()) {
    if (!weights.contains(name)) throw IoError("checkpoint is missing " + prefix + name);
    if (weights.at(name).shape() != fresh.at(name).shape())
      throw IoError("checkpoint tensor " + prefix + name + " has shape " + shape_string(weights.at(name).shape()) +
                    ", expected " + shape_string(fresh.at(name).shape()));
  }
  return weights;
}

}  // namespace

std::vector<std::uint8_t> encode_pfem(const Tensor& embedding) {
  Writer w;
  w.magic(kEmbeddingMagic);
  w.u16(kFormatVersion);
  w.u8(kDtypeF32);
  w.shape(embedding.shape());
  w.payload(embedding);
  return w.take();
}

Tensor decode_pfem(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PFEM");
  r.magic(kEmbeddingMagic);
  r.version();
  const std::uint8_t dtype = r.u8();
  if (dtype != kDtypeF32) throw IoError("PFEM dtype code " + std::to_string(dtype) + " is not supported");
  Tensor t = r.payload(r.shape());
  r.finish();
  return t;
}

void write_pfem(const std::filesystem::path& path, const Tensor& embedding) {
  write_file_bytes(path, encode_pfem(embedding));
}

Tensor read_pfem(const std::filesystem::path& path) {
  try {
    return decode_pfem(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params) {
  Writer w;
  w.magic(kCheckpointMagic);
  w.u16(kFormatVersion);
  require(params.size() <= std::numeric_limits<std::uint32_t>::max(), "too many tensors for a checkpoint");
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const std::string& name : params.names()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.shape(params.at(name).shape());
    w.payload(params.at(name));
  }
  return w.take();
}

ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PFCK");
  r.magic(kCheckpointMagic);
  r.version();
  const std::uint32_t count = r.u32();
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t length = r.u32();
    if (length > r.remaining()) throw IoError("PFCK is truncated");
    std::string name = r.text(length);
    if (params.contains(name)) throw IoError("PFCK repeats tensor name '" + name + "'");
    Tensor t = r.payload(r.shape());
    params.add(std::move(name), std::move(t));
  }
  r.finish();
  return params;
}

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  write_file_bytes(path, encode_checkpoint(params));
}

ParameterSet read_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

ParameterSet pack_backbone(const BackboneParams& model) {
  const BackboneConfig& c = model.config;
  std::vector<std::size_t> meta{c.image_size, c.patch, c.channels, c.mlp_ratio, c.stages.size()};
  for (const StageConfig& s : c.stages) meta.insert(meta.end(), {s.spectral_layers, s.attention_layers, s.heads, s.dim});
  ParameterSet out;
  out.add("meta.backbone", integer_tensor(meta));
  out.merge(model.weights, "backbone.");
  return out;
}

BackboneParams unpack_backbone(const ParameterSet& checkpoint) {
  const std::vector<std::size_t> meta = integers_of(checkpoint, "meta.backbone");
  if (meta.size() < 5 || meta.size() != 5 + 4 * meta[4]) throw IoError("meta.backbone has the wrong length");
  BackboneConfig c;
  c.image_size = meta[0];
  c.patch = meta[1];
  c.channels = meta[2];
  c.mlp_ratio = meta[3];
  c.stages.clear();
  for (std::size_t s = 0; s < meta[4]; ++s)
    c.stages.push_back({meta[5 + 4 * s], meta[6 + 4 * s], meta[7 + 4 * s], meta[8 + 4 * s]});
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw IoError(std::string("meta.backbone describes an invalid model: ") + e.what());
  }
  BackboneParams model{c, {}};
  model.weights = checked_weights(checkpoint, "backbone.", init_backbone(c, 0).weights);
  return model;
}

ParameterSet pack_video_encoder(const VideoEncoderParams& model) {
  const VideoEncoderConfig& c = model.config;
  ParameterSet out;
  out.add("meta.video_encoder", integer_tensor({c.layers, c.cross_heads, c.latents, c.latent_dim, c.input_dim,
                                                c.max_tokens, c.output_dim, c.mlp_ratio}));
  out.merge(model.weights, "video_encoder.");
  return out;
}

VideoEncoderParams unpack_video_encoder(const ParameterSet& checkpoint) {
  const std::vector<std::size_t> m = integers_of(checkpoint, "meta.video_encoder");
  if (m.size() != 8) throw IoError("meta.video_encoder has the wrong length");
  const VideoEncoderConfig c{m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7]};
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw IoError(std::string("meta.video_encoder describes an invalid model: ") + e.what());
  }
  VideoEncoderParams model{c, {}};
  model.weights = checked_weights(checkpoint, "video_encoder.", init_video_encoder(c, 0).weights);
  return model;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace painformer
