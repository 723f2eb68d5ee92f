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


#include "painformer/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "painformer/digest.hpp"
#include "painformer/error.hpp"
#include "painformer/experiments.hpp"
#include "painformer/fusion.hpp"
#include "painformer/heads.hpp"
#include "painformer/imaging.hpp"
#include "painformer/serialization.hpp"

namespace painformer::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kReferenceBackbone = 19.60e6;
constexpr double kReferenceMixer = 9.85e6;
constexpr double kReferenceVideoEncoder = 3.37e6;

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
};

json dims_of(const Tensor& t) { return json(t.shape()); }

const Colormap& colormap_from(const std::string& spec, Colormap& storage) {
  if (spec == "gray" || spec == "heat") return Colormap::named(spec);
  storage = Colormap::load(spec);
  return storage;
}

void write_image(const RasterImage& image, const fs::path& path) {
  require(path.extension() == ".ppm", "only .ppm output is supported, got '" + path.string() + "'");
  write_ppm(image, path);
}

Tensor load_image(const fs::path& path, const BackboneConfig& config) {
  const RasterImage image = read_ppm(path);
  require(image.width == config.image_size && image.height == config.image_size,
          path.string() + " is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
              " but the model expects " + std::to_string(config.image_size) + "x" +
              std::to_string(config.image_size));
  return image.to_tensor();
}

std::vector<fs::path> images_in(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "no .ppm images in " + dir.string());
  return files;
}

// ---------------------------------------------------------------- commands

struct RasterizeArgs {
  std::string input, kind, out, colormap = "gray";
  double rate = 0.0;
  std::optional<std::size_t> window, hop, fft;
};

json rasterize(const RasterizeArgs& a) {
  const fs::path input(a.input);
  Signal signal;
  if (input.extension() == ".csv") {
    require(a.rate > 0.0, "CSV input needs --rate");
    signal = read_signal_csv(input, a.rate);
  } else {
    signal = read_signal_raw(input);
    if (a.rate > 0.0) signal.rate = a.rate;
  }
  StftParams params = StftParams::for_rate(signal.rate);
  params.window = a.window.value_or(params.window);
  params.hop = a.hop.value_or(params.hop);
  params.fft_size = a.fft.value_or(params.fft_size);
  params.validate();

  Colormap custom = Colormap::gray();
  const Colormap& cm = colormap_from(a.colormap, custom);
  RasterImage image;
  if (a.kind == "wave") image = render_waveform(signal);
  else if (a.kind == "angle") image = render_spectrogram_angle(signal, params, cm);
  else if (a.kind == "phase") image = render_spectrogram_phase(signal, params, cm);
  else image = render_spectrogram_psd(signal, params, cm);
  write_image(image, a.out);
  return {{"out", a.out}, {"kind", a.kind}, {"sha256", sha256_hex(encode_ppm(image))}};
}

struct EmbedArgs {
  std::string image, checkpoint, out;
  bool unify = false;
};

json embed(const EmbedArgs& a) {
  const BackboneParams model = unpack_backbone(read_checkpoint(a.checkpoint));
  Tensor result;
  std::size_t count = 1;
  if (fs::is_directory(a.image)) {
    std::vector<Tensor> frames;
    for (const fs::path& file : images_in(a.image)) frames.push_back(painformer_embed(model, load_image(file, model.config)));
    count = frames.size();
    if (a.unify) {
      result = concat_frame_embeddings(frames);
    } else {
      const std::size_t dim = model.config.embedding_dim();
      result = Tensor({count, dim}, DType::f32);
      for (std::size_t i = 0; i < count; ++i) std::copy_n(frames[i].data().begin(), dim, result.data().begin() + i * dim);
    }
  } else {
    require(!a.unify, "--unify needs a directory of frames");
    result = painformer_embed(model, load_image(a.image, model.config));
  }
  write_pfem(a.out, result);
  return {{"out", a.out}, {"images", count}, {"dims", dims_of(result)}};
}

struct FuseArgs {
  std::string mode, out, encoder;
  std::vector<std::string> inputs;
};

json provenance_json(const FusedEmbedding& fused) {
  json parts = json::array();
  for (const Provenance& p : fused.provenance) parts.push_back({{"source", p.source}, {"begin", p.begin}, {"length", p.length}});
  return parts;
}

json fuse(const FuseArgs& a, std::uint64_t seed) {
  std::vector<Tensor> inputs;
  for (const std::string& path : a.inputs) inputs.push_back(read_pfem(path));
  json report{{"out", a.out}, {"mode", a.mode}};
  Tensor result;
  if (a.mode == "add") {
    require(inputs.size() >= 2, "add fusion needs at least two inputs");
    result = inputs[0];
    for (std::size_t i = 1; i < inputs.size(); ++i) result = fuse_add(result, inputs[i]);
  } else if (a.mode == "concat") {
    std::vector<EmbeddingPart> parts;
    for (std::size_t i = 0; i < inputs.size(); ++i) parts.push_back({fs::path(a.inputs[i]).stem().string(), inputs[i]});
    const FusedEmbedding fused = fuse_concat(parts);
    result = fused.values;
    report["provenance"] = provenance_json(fused);
  } else if (a.mode == "decision") {
    result = fuse_decision(inputs);
  } else {
    require(inputs.size() == 4, "biovid-multimodal fusion takes gsr, rgb, thermal and depth inputs in that order");
    const VideoEncoderParams encoder = a.encoder.empty() ? init_video_encoder({}, seed)
                                                         : unpack_video_encoder(read_checkpoint(a.encoder));
    const FusedEmbedding fused = multimodal_biovid_fuse(inputs[0], inputs[1], inputs[2], inputs[3], encoder);
    result = fused.values;
    report["provenance"] = provenance_json(fused);
  }
  write_pfem(a.out, result);
  report["dims"] = dims_of(result);
  return report;
}

struct TrainToyArgs {
  std::string out_dir, mode = "standard";
  std::size_t tasks = 3, subjects = 20, samples = 20, classes = 2, epochs = 7, batch = 24, warmup = 1, cooldown = 1;
  double separation = 4.0, lr = 2e-3, label_smoothing = 0.1, drop_path = 0.1;
};

json train_toy(const TrainToyArgs& a, std::uint64_t seed) {
  ToyTrainingConfig config;
  config.epochs = a.epochs;
  config.batch = a.batch;
  config.base_lr = a.lr;
  config.warmup_epochs = a.warmup;
  config.cooldown_epochs = a.cooldown;
  config.mode = parse_multitask_mode(a.mode);
  config.label_smoothing = a.label_smoothing;
  config.drop_path = a.drop_path;
  config.seed = seed;
  const std::vector<TaskSpec> specs(a.tasks, TaskSpec{a.classes, a.subjects, a.samples, a.separation});
  const Shape shape{config.backbone.image_size, config.backbone.image_size, config.backbone.channels};
  const ToyTrainingResult result = train_toy_multitask(generate_synthetic_tasks(specs, shape, seed), config);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const fs::path metrics = dir / "metrics.jsonl", checkpoint = dir / "checkpoint.pfck";
  std::ofstream trace(metrics, std::ios::trunc);
  if (!trace) throw IoError("cannot open " + metrics.string() + " for writing");
  write_trace_jsonl(result.trace, trace);
  ParameterSet packed = pack_backbone(result.model.backbone);
  packed.merge(result.model.heads);
  write_checkpoint(checkpoint, packed);
  return {{"metrics", metrics.string()},
          {"checkpoint", checkpoint.string()},
          {"steps", result.trace.size()},
          {"final_loss", result.final_loss},
          {"accuracy", result.accuracy},
          {"centroid_accuracy", result.centroid_accuracy}};
}

struct LosoArgs {
  std::size_t subjects = 5, samples = 20, classes = 2, tokens = 4, width = 16, epochs = 30, batch = 16;
  double separation = 8.0, lr = 3e-3;
};

json metrics_json(const Metrics& m) { return {{"accuracy", m.accuracy}, {"recall", m.recall}, {"f1", m.f1}}; }

json loso(const LosoArgs& a, std::uint64_t seed) {
  const std::vector<TaskSpec> spec{{a.classes, a.subjects, a.samples, a.separation}};
  const auto tasks = generate_synthetic_tasks(spec, {a.tokens, a.width}, seed);
  LosoConfig config = LosoConfig::reduced(a.width, a.classes);
  config.epochs = a.epochs;
  config.batch = a.batch;
  config.base_lr = a.lr;
  config.seed = seed;
  const LosoReport report = run_loso(tasks[0], config);
  json folds = json::array();
  for (const FoldReport& f : report.folds) {
    json row = metrics_json(f.model);
    row["subject"] = f.subject;
    row["baseline"] = metrics_json(f.baseline);
    folds.push_back(row);
  }
  return {{"folds", folds}, {"mean", metrics_json(report.model_mean)}, {"baseline_mean", metrics_json(report.baseline_mean)}};
}

struct AttentionArgs {
  std::string image, checkpoint, out, preset = "painformer", colormap = "heat";
  std::size_t head = 0;
};

json attention(const AttentionArgs& a, std::uint64_t seed) {
  const BackboneParams model = a.checkpoint.empty() ? init_backbone(backbone_preset(a.preset), seed)
                                                    : unpack_backbone(read_checkpoint(a.checkpoint));
  const Tensor map = attention_map(model, load_image(a.image, model.config), a.head, kRasterSize);
  Colormap custom = Colormap::gray();
  const RasterImage image = render_heatmap(map, colormap_from(a.colormap, custom));
  write_image(image, a.out);
  return {{"out", a.out}, {"head", a.head}, {"width", image.width}, {"height", image.height}};
}

struct ParamsArgs {
  std::string preset = "painformer";
  bool as_json = false;
};

void params(const ParamsArgs& a, std::uint64_t seed, std::ostream& out) {
  const BackboneParams backbone = init_backbone(backbone_preset(a.preset), seed);
  const MixerParams mixer = init_mixer({}, seed);
  const VideoEncoderParams encoder = init_video_encoder({}, seed);
  struct Row {
    std::string module;
    std::size_t count;
    double reference;
  };
  std::vector<Row> rows{{"backbone", backbone.parameter_count(), kReferenceBackbone},
                        {"embedding-mixer", mixer.parameter_count(), kReferenceMixer},
                        {"video-encoder", encoder.parameter_count(), kReferenceVideoEncoder}};
  std::vector<Row> parts{{"backbone.patch", backbone.weights.scalar_count("patch."), 0.0}};
  for (std::size_t s = 0; s < backbone.config.stages.size(); ++s) {
    const std::string name = "stage" + std::to_string(s);
    parts.push_back({"backbone." + name, backbone.weights.scalar_count(name + "."), 0.0});
  }
  parts.push_back({"backbone.head", backbone.weights.scalar_count("head."), 0.0});

  if (a.as_json) {
    json doc{{"preset", a.preset}};
    for (const Row& r : rows) doc[r.module] = {{"parameters", r.count}, {"reference", r.reference}};
    for (const Row& p : parts) doc["breakdown"][p.module] = p.count;
    out << doc.dump(2) << '\n';
    return;
  }
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %14s %14s %10s\n", "module", "parameters", "reference", "deviation");
  out << line;
  for (const Row& r : rows) {
    std::snprintf(line, sizeof line, "%-20s %14zu %13.2fM %+9.2f%%\n", r.module.c_str(), r.count, r.reference / 1e6,
                  100.0 * (static_cast<double>(r.count) - r.reference) / r.reference);
    out << line;
  }
  for (const Row& p : parts) {
    std::snprintf(line, sizeof line, "  %-18s %14zu\n", p.module.c_str(), p.count);
    out << line;
  }
}

struct InitArgs {
  std::string model = "backbone", preset = "painformer", out;
};

json init(const InitArgs& a, std::uint64_t seed) {
  ParameterSet packed;
  std::size_t count = 0;
  if (a.model == "backbone") {
    const BackboneParams model = init_backbone(backbone_preset(a.preset), seed);
    count = model.parameter_count();
    packed = pack_backbone(model);
  } else {
    const VideoEncoderParams model = init_video_encoder({}, seed);
    count = model.parameter_count();
    packed = pack_video_encoder(model);
  }
  write_checkpoint(a.out, packed);
  return {{"out", a.out}, {"model", a.model}, {"parameters", count}};
}

// ------------------------------------------------------------ config files

bool mentions_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) {
    std::ostringstream s;
    s.precision(17);
    s << v.get<double>();
    return s.str();
  }
  throw ContractViolation("config value " + v.dump() + " is not a string or number");
}

// Appends the entries of the --config file as flags, skipping any flag that
// the command line already sets.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ContractViolation("config file " + path + " is not valid JSON: " + e.what());
  }
  require(doc.is_object(), "config file " + path + " must hold a JSON object of flag values");
  std::vector<std::string> extra;
  for (const auto& [key, value] : doc.items()) {
    const std::string flag = "--" + key;
    require(key != "config", "config files cannot name another config file");
    if (mentions_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      extra.push_back(flag);
      for (const json& item : value) extra.push_back(scalar_text(item));
    } else {
      extra.push_back(flag + "=" + scalar_text(value));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

BackboneConfig backbone_preset(const std::string& name) {
  if (name == "painformer") return BackboneConfig::painformer();
  if (name == "toy") return BackboneConfig::toy();
  if (name == "slim") {
    BackboneConfig c = BackboneConfig::painformer();
    c.stages = {{1, 0, 1, 16}, {1, 0, 1, 32}, {0, 1, 2, 48}, {0, 1, 2, 160}};
    return c;
  }
  throw ContractViolation("unknown preset '" + name + "' (expected painformer, toy or slim)");
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PainFormer: spectral/attention backbone, fusion heads and toy training", "painformer"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--seed", globals.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--config", globals.config, "JSON file of flag values keyed by flag name");

  std::function<void()> action;
  auto emit = [&](const json& doc) { out << doc.dump(2) << '\n'; };
  const std::vector<std::string> presets{"painformer", "toy", "slim"};

  RasterizeArgs ra;
  CLI::App* cmd = app.add_subcommand("rasterize", "Render a signal file as a 224x224 PPM image");
  cmd->add_option("--input", ra.input, "Signal file (.csv or raw f32 with a .json sidecar)")->required();
  cmd->add_option("--kind", ra.kind, "Image kind")->required()->check(CLI::IsMember({"wave", "angle", "phase", "psd"}));
  cmd->add_option("--out", ra.out, "Output .ppm path")->required();
  cmd->add_option("--rate", ra.rate, "Sampling rate in Hz (required for CSV)");
  cmd->add_option("--colormap", ra.colormap, "gray, heat or a colormap file")->capture_default_str();
  cmd->add_option("--stft.window", ra.window, "STFT window length");
  cmd->add_option("--stft.hop", ra.hop, "STFT hop");
  cmd->add_option("--stft.fft", ra.fft, "STFT FFT size");
  cmd->callback([&] { action = [&] { emit(rasterize(ra)); }; });

  EmbedArgs ea;
  cmd = app.add_subcommand("embed", "Extract backbone embeddings from PPM images");
  cmd->add_option("--image", ea.image, "Image file or directory of frames")->required();
  cmd->add_option("--checkpoint", ea.checkpoint, "Backbone checkpoint (PFCK)")->required();
  cmd->add_option("--out", ea.out, "Output PFEM path")->required();
  cmd->add_flag("--unify", ea.unify, "Concatenate directory frames into one vector");
  cmd->callback([&] { action = [&] { emit(embed(ea)); }; });

  FuseArgs fa;
  cmd = app.add_subcommand("fuse", "Fuse embeddings or class probabilities");
  cmd->add_option("--mode", fa.mode, "Fusion mode")->required()->check(
      CLI::IsMember({"add", "concat", "decision", "biovid-multimodal"}));
  cmd->add_option("--inputs", fa.inputs, "Input PFEM files")->required();
  cmd->add_option("--out", fa.out, "Output PFEM path")->required();
  cmd->add_option("--encoder", fa.encoder, "Video-Encoder checkpoint for biovid-multimodal");
  cmd->callback([&] { action = [&] { emit(fuse(fa, globals.seed)); }; });

  TrainToyArgs ta;
  cmd = app.add_subcommand("train-toy", "Multi-task training of the toy backbone on synthetic tasks");
  cmd->add_option("--out-dir", ta.out_dir, "Directory for metrics.jsonl and checkpoint.pfck")->required();
  cmd->add_option("--tasks", ta.tasks)->capture_default_str();
  cmd->add_option("--subjects", ta.subjects)->capture_default_str();
  cmd->add_option("--samples", ta.samples, "Samples per subject")->capture_default_str();
  cmd->add_option("--classes", ta.classes)->capture_default_str();
  cmd->add_option("--separation", ta.separation)->capture_default_str();
  cmd->add_option("--epochs", ta.epochs)->capture_default_str();
  cmd->add_option("--batch", ta.batch)->capture_default_str();
  cmd->add_option("--lr", ta.lr, "Base learning rate")->capture_default_str();
  cmd->add_option("--warmup", ta.warmup, "Warmup epochs")->capture_default_str();
  cmd->add_option("--cooldown", ta.cooldown, "Cooldown epochs at the LR floor")->capture_default_str();
  cmd->add_option("--mode", ta.mode, "Task-weighting form")->check(CLI::IsMember({"standard", "verbatim"}))->capture_default_str();
  cmd->add_option("--label-smoothing", ta.label_smoothing)->capture_default_str();
  cmd->add_option("--drop-path", ta.drop_path)->capture_default_str();
  cmd->callback([&] { action = [&] { emit(train_toy(ta, globals.seed)); }; });

  LosoArgs la;
  cmd = app.add_subcommand("loso", "Leave-one-subject-out evaluation of a small Mixer on synthetic data");
  cmd->add_option("--subjects", la.subjects)->capture_default_str();
  cmd->add_option("--samples", la.samples, "Samples per subject")->capture_default_str();
  cmd->add_option("--classes", la.classes)->capture_default_str();
  cmd->add_option("--separation", la.separation)->capture_default_str();
  cmd->add_option("--tokens", la.tokens, "Tokens per sample")->capture_default_str();
  cmd->add_option("--width", la.width, "Token width")->capture_default_str();
  cmd->add_option("--epochs", la.epochs)->capture_default_str();
  cmd->add_option("--batch", la.batch)->capture_default_str();
  cmd->add_option("--lr", la.lr)->capture_default_str();
  cmd->callback([&] { action = [&] { emit(loso(la, globals.seed)); }; });

  AttentionArgs aa;
  cmd = app.add_subcommand("attention", "Write a last-stage attention heat map for one image");
  cmd->add_option("--image", aa.image, "Input PPM")->required();
  cmd->add_option("--out", aa.out, "Output .ppm path")->required();
  cmd->add_option("--checkpoint", aa.checkpoint, "Backbone checkpoint; a seeded model otherwise");
  cmd->add_option("--preset", aa.preset)->check(CLI::IsMember(presets))->capture_default_str();
  cmd->add_option("--head", aa.head)->capture_default_str();
  cmd->add_option("--colormap", aa.colormap, "gray, heat or a colormap file")->capture_default_str();
  cmd->callback([&] { action = [&] { emit(attention(aa, globals.seed)); }; });

  ParamsArgs pa;
  cmd = app.add_subcommand("params", "Report parameter counts next to the published ones");
  cmd->add_option("--preset", pa.preset)->check(CLI::IsMember(presets))->capture_default_str();
  cmd->add_flag("--json", pa.as_json, "Emit JSON");
  cmd->callback([&] { action = [&] { params(pa, globals.seed, out); }; });

  InitArgs ia;
  cmd = app.add_subcommand("init", "Write a freshly initialized checkpoint");
  cmd->add_option("--model", ia.model)->check(CLI::IsMember({"backbone", "video-encoder"}))->capture_default_str();
  cmd->add_option("--preset", ia.preset, "Backbone preset")->check(CLI::IsMember(presets))->capture_default_str();
  cmd->add_option("--out", ia.out, "Output PFCK path")->required();
  cmd->callback([&] { action = [&] { emit(init(ia, globals.seed)); }; });

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e, out, err);
      err << "painformer: " << e.what() << '\n';
      return 2;
    }
    action();
    return 0;
  } catch (const ContractViolation& e) {
    err << "painformer: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "painformer: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "painformer: internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace painformer::cli
