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
#include <iosfwd>
#include <span>
#include <vector>

#include "painformer/backbone.hpp"
#include "painformer/heads.hpp"
#include "painformer/params.hpp"
#include "painformer/tensor.hpp"
#include "painformer/training.hpp"

namespace painformer {

struct TaskSpec {
  std::size_t classes = 2;
  std::size_t subjects = 10;
  std::size_t samples_per_subject = 20;
  // Distance between class means in units of the within-class latent noise.
  double separation = 4.0;
};

struct Sample {
  Tensor input;
  std::size_t label = 0;
  std::size_t subject = 0;
};

struct SyntheticTask {
  std::size_t id = 0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  std::vector<std::size_t> subject_ids() const;
  std::vector<std::size_t> labels() const;
};

// Samples come from a low-dimensional latent Gaussian: one mean per class,
// a per-subject offset along nuisance directions, and unit noise, projected
// through a fixed random map onto `sample_shape` with small additive noise.
std::vector<SyntheticTask> generate_synthetic_tasks(std::span<const TaskSpec> specs, const Shape& sample_shape,
                                                    std::uint64_t seed);

class NearestCentroid {
 public:
  NearestCentroid(const std::vector<Sample>& samples, std::span<const std::size_t> indices, std::size_t classes);
  std::size_t predict(const Tensor& input) const;

 private:
  std::vector<std::vector<double>> centroids_;
};

struct Fold {
  std::size_t subject = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// One fold per distinct subject, in ascending subject order.
std::vector<Fold> loso_split(std::span<const std::size_t> subject_ids);

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double total_loss = 0.0;
  std::vector<double> losses;
  std::vector<double> weights;
  std::vector<double> accuracy;  // on the step's batch
};

void write_trace_jsonl(std::span<const StepRecord> trace, std::ostream& out);

struct ToyTrainingConfig {
  BackboneConfig backbone = BackboneConfig::toy();
  std::size_t epochs = 7;
  std::size_t batch = 24;
  double base_lr = 2e-3;
  std::size_t warmup_epochs = 1;
  std::size_t cooldown_epochs = 1;
  AdamWConfig optimizer{};
  MultitaskMode mode = MultitaskMode::standard;
  double label_smoothing = 0.1;
  double drop_path = 0.1;
  std::uint64_t seed = 7;
};

struct ToyModel {
  BackboneParams backbone;
  // aux{t}.weight, aux{t}.bias per task and task.w holding the loss weights.
  ParameterSet heads;
};

struct ToyTrainingResult {
  ToyModel model;
  std::vector<StepRecord> trace;
  std::vector<double> accuracy;           // held-out, per task
  std::vector<double> centroid_accuracy;  // same split, nearest-centroid
  double final_loss = 0.0;
};

// Every fifth sample of each subject is held out for evaluation.
bool is_held_out(std::size_t index_within_subject);

ToyTrainingResult train_toy_multitask(const std::vector<SyntheticTask>& tasks, const ToyTrainingConfig& config);

std::size_t toy_predict(const ToyModel& model, std::size_t task, const Tensor& image);

struct LosoConfig {
  MixerConfig mixer;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double base_lr = 3e-3;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;

  // A small Mixer sized for token samples of the given width.
  static LosoConfig reduced(std::size_t width, std::size_t classes);
};

struct FoldReport {
  std::size_t subject = 0;
  Metrics model;
  Metrics baseline;
};

struct LosoReport {
  std::vector<FoldReport> folds;
  Metrics model_mean;
  Metrics baseline_mean;
};

// Trains a fresh Mixer per fold on [tokens x width] samples and scores it
// next to the nearest-centroid baseline.
LosoReport run_loso(const SyntheticTask& task, const LosoConfig& config);

}  // namespace painformer
