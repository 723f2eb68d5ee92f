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


#include "painformer/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "colormap_tables.hpp"
#include "painformer/error.hpp"
#include "painformer/fft.hpp"

namespace painformer {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMargin = 8;

std::size_t color_index(double v, double lo, double hi) {
  if (!(hi > lo)) return 0;
  const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::size_t>(std::floor(t * 255.0 + 0.5));
}

void set_pixel(RasterImage& img, std::size_t y, std::size_t x, const Colormap::Rgb& rgb) {
  for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
}

void draw_line(RasterImage& img, long x0, long y0, long x1, long y1) {
  const Colormap::Rgb white{255, 255, 255};
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    set_pixel(img, static_cast<std::size_t>(y0), static_cast<std::size_t>(x0), white);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

std::pair<double, double> value_range(const Tensor& t) {
  const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  return {*lo, *hi};
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::array<Colormap::Rgb, 256> to_table(const std::array<std::array<std::uint8_t, 3>, 256>& src) {
  std::array<Colormap::Rgb, 256> table{};
  std::copy(src.begin(), src.end(), table.begin());
  return table;
}

}  // namespace

void Signal::validate() const {
  require(std::isfinite(rate) && rate > 0.0, "signal rate must be positive");
  require(!samples.empty(), "signal has no samples");
  require(std::all_of(samples.begin(), samples.end(), [](double v) { return std::isfinite(v); }),
          "signal contains non-finite samples");
}

StftParams StftParams::for_rate(double rate) {
  if (rate < 128.0) return {64, 16, 64};
  return {256, 64, 256};
}

void StftParams::validate() const {
  require(window >= 1 && hop >= 1, "STFT window and hop must be positive");
  require(window <= fft_size, "STFT window (" + std::to_string(window) + ") exceeds FFT size (" +
                                  std::to_string(fft_size) + ")");
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

StftMatrix stft(const Signal& signal, const StftParams& params) {
  signal.validate();
  params.validate();
  const std::size_t len = signal.samples.size();
  StftMatrix out;
  out.params = params;
  out.bins = params.fft_size / 2 + 1;
  out.frames = len < params.window ? 1 : (len - params.window) / params.hop + 1;
  out.values.reserve(out.frames * out.bins);

  const std::vector<double> window = hann_window(params.window);
  const FourierPlan1D plan(params.fft_size);
  std::vector<double> frame(params.fft_size);
  for (std::size_t f = 0; f < out.frames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const std::size_t start = f * params.hop;
    for (std::size_t i = 0; i < params.window && start + i < len; ++i)
      frame[i] = signal.samples[start + i] * window[i];
    const auto spectrum = rfft(frame, plan);
    out.values.insert(out.values.end(), spectrum.begin(), spectrum.end());
  }
  return out;
}

Tensor angle_matrix(const StftMatrix& s) {
  Tensor out({s.frames, s.bins}, DType::f64);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const auto& z = s.values[i];
    out[i] = (z.real() == 0.0 && z.imag() == 0.0) ? 0.0 : std::atan2(z.imag(), z.real());
  }
  return out;
}

std::vector<double> unwrap(std::span<const double> phase) {
  std::vector<double> out(phase.begin(), phase.end());
  double offset = 0.0;
  for (std::size_t i = 1; i < phase.size(); ++i) {
    const double jump = phase[i] - phase[i - 1];
    if (jump > kPi) offset -= 2.0 * kPi * std::ceil((jump - kPi) / (2.0 * kPi));
    else if (jump < -kPi) offset += 2.0 * kPi * std::ceil((-jump - kPi) / (2.0 * kPi));
    out[i] = phase[i] + offset;
  }
  return out;
}

Tensor unwrapped_phase_matrix(const StftMatrix& s) {
  Tensor angles = angle_matrix(s);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto row = angles.data().subspan(f * s.bins, s.bins);
    const std::vector<double> unwrapped = unwrap(row);
    std::copy(unwrapped.begin(), unwrapped.end(), row.begin());
  }
  return angles;
}

Tensor psd_matrix(const StftMatrix& s, double rate) {
  require(rate > 0.0, "PSD needs a positive sample rate");
  const std::vector<double> window = hann_window(s.params.window);
  double energy = 0.0;
  for (double w : window) energy += w * w;
  const std::size_t n = s.params.fft_size;
  Tensor out({s.frames, s.bins}, DType::f64);
  for (std::size_t f = 0; f < s.frames; ++f)
    for (std::size_t b = 0; b < s.bins; ++b) {
      const bool edge = b == 0 || (n % 2 == 0 && b == n / 2);
      out.at(f, b) = std::norm(s.at(f, b)) / (rate * energy) * (edge ? 1.0 : 2.0);
    }
  return out;
}

Colormap::Colormap(std::string name, std::array<Rgb, 256> table)
    : name_(std::move(name)), table_(table) {}

const Colormap& Colormap::gray() {
  static const Colormap map("gray", to_table(detail::kGrayTable));
  return map;
}

const Colormap& Colormap::heat() {
  static const Colormap map("heat", to_table(detail::kHeatTable));
  return map;
}

const Colormap& Colormap::named(const std::string& name) {
  if (name == "gray") return gray();
  if (name == "heat") return heat();
  throw ContractViolation("unknown colormap '" + name + "' (expected gray or heat)");
}

Colormap Colormap::load(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::array<Rgb, 256> table{};
  std::size_t count = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    int r = -1, g = -1, b = -1;
    if (!(fields >> r >> g >> b) || std::min({r, g, b}) < 0 || std::max({r, g, b}) > 255)
      throw IoError("malformed colormap entry in " + path.string() + ": '" + line + "'");
    if (count == 256) throw IoError(path.string() + " has more than 256 colormap entries");
    table[count++] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  }
  if (count != 256) throw IoError(path.string() + " has " + std::to_string(count) + " entries, expected 256");
  return Colormap(path.stem().string(), table);
}

Tensor RasterImage::to_tensor() const {
  Tensor out({height, width, 3}, DType::f32);
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i] / 255.0;
  return out.round_to_dtype();
}

RasterImage render_waveform(const Signal& signal) {
  signal.validate();
  RasterImage img;
  const auto [lo, hi] = std::minmax_element(signal.samples.begin(), signal.samples.end());
  const double low = *lo, range = *hi - *lo;
  const std::size_t span = kRasterSize - 1 - 2 * kMargin;
  const std::size_t n = signal.samples.size();
  auto point = [&](std::size_t i) {
    const double fx = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    const long x = static_cast<long>(kMargin + std::lround(fx * static_cast<double>(span)));
    long y = static_cast<long>(kRasterSize / 2);
    if (range > 0.0) {
      const double fy = (signal.samples[i] - low) / range;
      y = static_cast<long>(kRasterSize - 1 - kMargin) - std::lround(fy * static_cast<double>(span));
    }
    return std::pair{x, y};
  };
  auto [px, py] = point(0);
  draw_line(img, px, py, px, py);
  for (std::size_t i = 1; i < n; ++i) {
    const auto [x, y] = point(i);
    draw_line(img, px, py, x, y);
    px = x;
    py = y;
  }
  return img;
}

RasterImage render_matrix(const Tensor& values, double lo, double hi, const Colormap& colormap) {
  require(values.rank() == 2 && values.size() > 0, "render_matrix expects a non-empty [frames x bins] matrix");
  const std::size_t frames = values.dim(0), bins = values.dim(1);
  RasterImage img;
  for (std::size_t y = 0; y < kRasterSize; ++y) {
    const std::size_t bin = bins - 1 - y * bins / kRasterSize;
    for (std::size_t x = 0; x < kRasterSize; ++x) {
      const std::size_t frame = x * frames / kRasterSize;
      set_pixel(img, y, x, colormap[color_index(values.at(frame, bin), lo, hi)]);
    }
  }
  return img;
}

RasterImage render_heatmap(const Tensor& values, const Colormap& colormap) {
  require(values.rank() == 2 && values.size() > 0, "render_heatmap expects a non-empty [h x w] grid");
  RasterImage img;
  img.height = values.dim(0);
  img.width = values.dim(1);
  img.pixels.assign(img.width * img.height * 3, 0);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) set_pixel(img, y, x, colormap[color_index(values.at(y, x), 0.0, 1.0)]);
  return img;
}

RasterImage render_spectrogram_angle(const Signal& signal, const StftParams& params, const Colormap& colormap) {
  return render_matrix(angle_matrix(stft(signal, params)), -kPi, kPi, colormap);
}

RasterImage render_spectrogram_phase(const Signal& signal, const StftParams& params, const Colormap& colormap) {
  const Tensor phase = unwrapped_phase_matrix(stft(signal, params));
  const auto [lo, hi] = value_range(phase);
  return render_matrix(phase, lo, hi, colormap);
}

RasterImage render_spectrogram_psd(const Signal& signal, const StftParams& params, const Colormap& colormap) {
  Tensor db = psd_matrix(stft(signal, params), signal.rate);
  for (double& v : db.data()) v = v > 0.0 ? std::max(10.0 * std::log10(v), kPsdFloorDb) : kPsdFloorDb;
  const auto [lo, hi] = value_range(db);
  return render_matrix(db, lo, hi, colormap);
}

std::vector<std::uint8_t> encode_ppm(const RasterImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  return bytes;
}

void write_ppm(const RasterImage& image, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  if (!(in >> magic >> width >> height >> maxval) || magic != "P6" || maxval != 255)
    throw IoError(path.string() + " is not an 8-bit binary PPM");
  in.get();
  RasterImage img;
  img.width = width;
  img.height = height;
  img.pixels.assign(width * height * 3, 0);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
    throw IoError(path.string() + " has a truncated pixel payload");
  return img;
}

Signal read_signal_csv(const std::filesystem::path& path, double rate, const std::string& label) {
  std::ifstream in = open_input(path);
  Signal sig{{}, rate, label.empty() ? path.stem().string() : label};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::string cell = line.substr(first, line.find_first_of(",\r", first) - first);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0) {
      if (line_no == 1 && sig.samples.empty()) continue;
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
    }
    sig.samples.push_back(v);
  }
  sig.validate();
  return sig;
}

Signal read_signal_raw(const std::filesystem::path& path) {
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  nlohmann::json meta;
  try {
    std::ifstream js = open_input(sidecar);
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid JSON sidecar " + sidecar.string() + ": " + e.what());
  }
  if (!meta.contains("rate") || !meta["rate"].is_number())
    throw IoError(sidecar.string() + " lacks a numeric \"rate\"");
  Signal sig{{}, meta["rate"].get<double>(), meta.value("label", path.stem().string())};

  std::ifstream in = open_input(path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw IoError(path.string() + " length is not a multiple of 4 bytes");
  sig.samples.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < sig.samples.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    sig.samples[i] = std::bit_cast<float>(bits);
  }
  sig.validate();
  return sig;
}

void write_signal_raw(const Signal& signal, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (double v : signal.samples) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (std::size_t b = 0; b < 4; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  std::ofstream meta(sidecar);
  if (!meta) throw IoError("cannot write " + sidecar.string());
  meta << nlohmann::json{{"rate", signal.rate}, {"label", signal.label}}.dump() << "\n";
}

}  // namespace painformer
