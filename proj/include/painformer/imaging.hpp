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

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "painformer/tensor.hpp"

namespace painformer {

struct Signal {
  std::vector<double> samples;
  double rate = 0.0;
  std::string label;

  // Throws ContractViolation unless rate > 0 and samples are non-empty and finite.
  void validate() const;
};

struct StftParams {
  std::size_t window = 256;
  std::size_t hop = 64;
  std::size_t fft_size = 256;

  // 64/16/64 for slow signals such as 50 Hz fNIRS, 256/64/256 otherwise.
  static StftParams for_rate(double rate);
  void validate() const;
  bool operator==(const StftParams&) const = default;
};

struct StftMatrix {
  StftParams params;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> values;  // row-major [frames x bins]

  const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
    return values[frame * bins + bin];
  }
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// One-sided spectrum of Hann-windowed frames. A signal shorter than the
// window yields a single frame, zero-padded to the window length.
StftMatrix stft(const Signal& signal, const StftParams& params);

// [frames x bins] matrices behind the three spectrogram renderers.
Tensor angle_matrix(const StftMatrix& s);
Tensor unwrapped_phase_matrix(const StftMatrix& s);
Tensor psd_matrix(const StftMatrix& s, double rate);

// Adds multiples of 2*pi so that successive differences stay within pi.
std::vector<double> unwrap(std::span<const double> phase);

inline constexpr double kPsdFloorDb = -120.0;

class Colormap {
 public:
  using Rgb = std::array<std::uint8_t, 3>;

  explicit Colormap(std::string name, std::array<Rgb, 256> table);

  static const Colormap& gray();
  static const Colormap& heat();
  // "gray" or "heat".
  static const Colormap& named(const std::string& name);
  // 256 lines of "r g b"; lines starting with '#' are ignored.
  static Colormap load(const std::filesystem::path& path);

  const std::string& name() const { return name_; }
  const Rgb& operator[](std::size_t index) const { return table_[index]; }

 private:
  std::string name_;
  std::array<Rgb, 256> table_;
};

inline constexpr std::size_t kRasterSize = 224;

struct RasterImage {
  std::size_t width = kRasterSize;
  std::size_t height = kRasterSize;
  std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kRasterSize * kRasterSize * 3, 0);

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  // [height, width, 3] with channel values scaled to [0, 1].
  Tensor to_tensor() const;
};

// White 1-pixel polyline on black with 8-pixel margins; a constant signal
// is drawn on the centre row.
RasterImage render_waveform(const Signal& signal);

// Principal angle mapped linearly from [-pi, pi] onto the colormap.
RasterImage render_spectrogram_angle(const Signal& signal, const StftParams& params,
                                     const Colormap& colormap = Colormap::gray());
// Phase unwrapped along frequency, min-max normalised per image.
RasterImage render_spectrogram_phase(const Signal& signal, const StftParams& params,
                                     const Colormap& colormap = Colormap::gray());
// Power spectral density in dB (floored), min-max normalised per image.
RasterImage render_spectrogram_psd(const Signal& signal, const StftParams& params,
                                   const Colormap& colormap = Colormap::gray());

// Nearest-neighbour resampling of a [frames x bins] matrix: time along x,
// lowest bin on the bottom row. Values are mapped linearly from [lo, hi] onto
// the colormap; when hi <= lo every pixel takes entry 0.
RasterImage render_matrix(const Tensor& values, double lo, double hi, const Colormap& colormap);

// One pixel per entry of an [h x w] grid of values in [0, 1], row 0 on top.
RasterImage render_heatmap(const Tensor& values, const Colormap& colormap);

std::vector<std::uint8_t> encode_ppm(const RasterImage& image);
void write_ppm(const RasterImage& image, const std::filesystem::path& path);
RasterImage read_ppm(const std::filesystem::path& path);

// One numeric column, optional non-numeric header line.
Signal read_signal_csv(const std::filesystem::path& path, double rate, const std::string& label = "");
// Little-endian f32 samples plus a JSON sidecar {"rate": ..., "label": ...}
// located at `<path without extension>.json`.
Signal read_signal_raw(const std::filesystem::path& path);
void write_signal_raw(const Signal& signal, const std::filesystem::path& path);

}  // namespace painformer
