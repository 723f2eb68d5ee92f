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


#include "painformer/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "json.hpp"
#include "painformer/error.hpp"
#include "painformer/rng.hpp"

namespace painformer {
namespace {

constexpr std::size_t kNuisanceDims = 4;
constexpr double kObservationNoise = 0.1;

std::string indexed(const std::string& stream, std::size_t i) { return stream + "." + std::to_string(i); }
std::string aux_prefix(std::size_t task) { return "aux" + std::to_string(task); }

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

// Position of each sample among the samples of its own subject.
std::vector<std::size_t> rank_within_subject(const SyntheticTask& task) {
  std::map<std::size_t, std::size_t> seen;
  std::vector<std::size_t> rank;
  rank.reserve(task.samples.size());
  for (const Sample& s : task.samples) rank.push_back(seen[s.subject]++);
  return rank;
}

// Cycles through a shuffled index list, reshuffling after each pass.
class BatchCursor {
 public:
  BatchCursor(std::vector<std::size_t> indices, Rng& rng) : order_(std::move(indices)), rng_(&rng) { shuffle(); }

  std::size_t next() {
    if (pos_ == order_.size()) shuffle();
    return order_[pos_++];
  }

 private:
  void shuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_->engine());
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  Rng* rng_;
  std::size_t pos_ = 0;
};

ad::Var aux_logits(ad::Var embedding, const BoundParameters& heads, std::size_t task) {
  const std::string prefix = aux_prefix(task);
  return ad::elu(ad::linear(embedding, heads(prefix + ".weight"), heads(prefix + ".bias")));
}

Metrics mean_metrics(const std::vector<Metrics>& all) {
  Metrics m;
  for (const Metrics& x : all) {
    m.accuracy += x.accuracy;
    m.recall += x.recall;
    m.f1 += x.f1;
  }
  const double n = static_cast<double>(all.size());
  return {m.accuracy / n, m.recall / n, m.f1 / n};
}

}  // namespace

std::vector<std::size_t> SyntheticTask::subject_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(samples.size());
  for (const Sample& s : samples) ids.push_back(s.subject);
  return ids;
}

std::vector<std::size_t> SyntheticTask::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.label);
  return out;
}

std::vector<SyntheticTask> generate_synthetic_tasks(std::span<const TaskSpec> specs, const Shape& sample_shape,
                                                    std::uint64_t seed) {
  const std::size_t dims = shape_size(sample_shape);
  require(dims > 0, "synthetic samples need a non-empty shape");
  std::vector<SyntheticTask> tasks;
  for (std::size_t t = 0; t < specs.size(); ++t) {
    const TaskSpec& spec = specs[t];
    require(spec.separation > 0.0, "separation must be positive");
    require(spec.classes >= 2, "a task needs at least two classes");
    require(spec.subjects >= 1 && spec.samples_per_subject >= 1, "a task needs subjects and samples");

    SyntheticTask task;
    task.id = t;
    task.classes = spec.classes;
    task.seed = derive_seed(seed, indexed("synthetic.task", t));
    Rng rng(task.seed);

    const std::size_t latent = spec.classes + kNuisanceDims;
    // Class means sit on scaled basis vectors, pairwise `separation` apart.
    const double class_scale = spec.separation / std::sqrt(2.0);
    std::vector<double> projection(dims * latent);
    for (double& v : projection) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(latent)));

    std::vector<std::vector<double>> offsets(spec.subjects, std::vector<double>(latent, 0.0));
    for (auto& offset : offsets)
      for (std::size_t j = spec.classes; j < latent; ++j) offset[j] = rng.normal();

    std::vector<double> z(latent);
    for (std::size_t s = 0; s < spec.subjects; ++s) {
      for (std::size_t i = 0; i < spec.samples_per_subject; ++i) {
        const std::size_t label = i % spec.classes;
        for (std::size_t j = 0; j < latent; ++j)
          z[j] = (j == label ? class_scale : 0.0) + offsets[s][j] + rng.normal();
        Tensor x(sample_shape, DType::f32);
        for (std::size_t d = 0; d < dims; ++d) {
          double v = rng.normal(0.0, kObservationNoise);
          for (std::size_t j = 0; j < latent; ++j) v += projection[d * latent + j] * z[j];
          x[d] = v;
        }
        x.round_to_dtype();
        task.samples.push_back({std::move(x), label, s});
      }
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

NearestCentroid::NearestCentroid(const std::vector<Sample>& samples, std::span<const std::size_t> indices,
                                 std::size_t classes) {
  require(!indices.empty(), "nearest centroid needs training samples");
  const std::size_t dims = samples[indices.front()].input.size();
  centroids_.assign(classes, std::vector<double>(dims, 0.0));
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i : indices) {
    const Sample& s = samples.at(i);
    require(s.label < classes && s.input.size() == dims, "inconsistent sample for nearest centroid");
    for (std::size_t d = 0; d < dims; ++d) centroids_[s.label][d] += s.input[d];
    ++counts[s.label];
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (double& v : centroids_[c]) v = counts[c] ? v / static_cast<double>(counts[c]) : HUGE_VAL;
}

std::size_t NearestCentroid::predict(const Tensor& input) const {
  std::size_t best = 0;
  double best_distance = HUGE_VAL;
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    require(input.size() == centroids_[c].size(), "input size differs from the centroids");
    double distance = 0.0;
    for (std::size_t d = 0; d < input.size(); ++d) distance += (input[d] - centroids_[c][d]) * (input[d] - centroids_[c][d]);
    if (distance < best_distance) {
      best_distance = distance;
      best = c;
    }
  }
  return best;
}

std::vector<Fold> loso_split(std::span<const std::size_t> subject_ids) {
  std::map<std::size_t, Fold> folds;
  for (std::size_t subject : subject_ids) folds[subject].subject = subject;
  require(folds.size() >= 2, "leave-one-subject-out needs at least two subjects, got " +
                                 std::to_string(folds.size()));
  for (std::size_t i = 0; i < subject_ids.size(); ++i)
    for (auto& [subject, fold] : folds) (subject == subject_ids[i] ? fold.test : fold.train).push_back(i);
  std::vector<Fold> out;
  out.reserve(folds.size());
  for (auto& [subject, fold] : folds) out.push_back(std::move(fold));
  return out;
}

void write_trace_jsonl(std::span<const StepRecord> trace, std::ostream& out) {
  for (const StepRecord& r : trace) {
    nlohmann::json line = {{"step", r.step},         {"lr", r.lr},           {"total_loss", r.total_loss},
                           {"loss", r.losses},       {"w", r.weights},       {"accuracy", r.accuracy}};
    out << line.dump() << '\n';
  }
}

bool is_held_out(std::size_t index_within_subject) { return index_within_subject % 5 == 4; }

std::size_t toy_predict(const ToyModel& model, std::size_t task, const Tensor& image) {
  ad::Tape tape(DType::f32);
  BoundParameters backbone(tape, model.backbone.weights, false);
  BoundParameters heads(tape, model.heads, false);
  ad::Var embedding = painformer_forward(tape.constant(image), backbone, model.backbone.config);
  return argmax(aux_logits(embedding, heads, task).value());
}

ToyTrainingResult train_toy_multitask(const std::vector<SyntheticTask>& tasks, const ToyTrainingConfig& config) {
  require(!tasks.empty(), "toy training needs at least one task");
  config.backbone.validate();
  const Shape image_shape{config.backbone.image_size, config.backbone.image_size, config.backbone.channels};
  const std::size_t task_count = tasks.size();

  std::vector<std::vector<std::size_t>> train(task_count), held_out(task_count);
  for (std::size_t t = 0; t < task_count; ++t) {
    const std::vector<std::size_t> rank = rank_within_subject(tasks[t]);
    for (std::size_t i = 0; i < tasks[t].samples.size(); ++i) {
      require(tasks[t].samples[i].input.shape() == image_shape,
              "task samples must be images of shape " + shape_string(image_shape));
      (is_held_out(rank[i]) ? held_out[t] : train[t]).push_back(i);
    }
    require(!train[t].empty() && !held_out[t].empty(), "every task needs training and held-out samples");
  }

  std::vector<std::size_t> sizes;
  for (const auto& indices : train) sizes.push_back(indices.size());
  const std::vector<std::size_t> shares = apportion_batch(config.batch, sizes);
  const std::size_t train_total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});

  ScheduleConfig schedule;
  schedule.base_lr = config.base_lr;
  schedule.warmup_epochs = config.warmup_epochs;
  schedule.cooldown_epochs = config.cooldown_epochs;
  schedule.total_epochs = config.epochs;
  schedule.steps_per_epoch = (train_total + config.batch - 1) / config.batch;
  schedule.validate();

  ToyTrainingResult result;
  ToyModel& model = result.model;
  model.backbone = init_backbone(config.backbone, config.seed);
  Rng head_rng(config.seed, "toy.heads");
  const std::size_t dim = config.backbone.embedding_dim();
  for (std::size_t t = 0; t < task_count; ++t) {
    model.heads.add(aux_prefix(t) + ".weight", init_fan_in({dim, tasks[t].classes}, head_rng));
    model.heads.add(aux_prefix(t) + ".bias", Tensor({tasks[t].classes}, DType::f32));
  }
  model.heads.add("task.w", Tensor({task_count}, DType::f32));

  OptimizerState backbone_opt = make_adamw(model.backbone.weights, config.optimizer);
  OptimizerState head_opt = make_adamw(model.heads, config.optimizer);

  Rng batch_rng(config.seed, "toy.batch");
  Rng path_rng(config.seed, "toy.droppath");
  std::vector<BatchCursor> cursors;
  for (std::size_t t = 0; t < task_count; ++t) cursors.emplace_back(train[t], batch_rng);

  const ForwardOptions options{true, config.drop_path, &path_rng};
  const std::size_t steps = schedule.total_steps();
  for (std::size_t step = 0; step < steps; ++step) {
    StepRecord record;
    record.step = step + 1;
    record.lr = cosine_lr(static_cast<double>(step + 1), schedule);

    ad::Tape tape(DType::f32);
    BoundParameters backbone(tape, model.backbone.weights, true);
    BoundParameters heads(tape, model.heads, true);
    std::vector<ad::Var> task_losses;
    for (std::size_t t = 0; t < task_count; ++t) {
      ad::Var sum;
      std::size_t correct = 0;
      for (std::size_t b = 0; b < shares[t]; ++b) {
        const Sample& sample = tasks[t].samples[cursors[t].next()];
        ad::Var embedding = painformer_forward(tape.constant(sample.input), backbone, config.backbone, options);
        ad::Var logits = aux_logits(embedding, heads, t);
        correct += argmax(logits.value()) == sample.label;
        ad::Var ce = ad::label_smoothing_ce(logits, sample.label, config.label_smoothing);
        sum = sum.valid() ? ad::add(sum, ce) : ce;
      }
      task_losses.push_back(ad::scale(sum, 1.0 / static_cast<double>(shares[t])));
      record.losses.push_back(task_losses.back().value()[0]);
      record.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(shares[t]));
    }
    ad::Var total = multitask_loss(task_losses, heads("task.w"), config.mode);
    tape.backward(total);
    record.total_loss = total.value()[0];
    const Tensor& w = model.heads.at("task.w");
    record.weights.assign(w.data().begin(), w.data().end());

    adamw_step(model.backbone.weights, backbone.gradients(), backbone_opt, record.lr);
    adamw_step(model.heads, heads.gradients(), head_opt, record.lr);
    result.trace.push_back(std::move(record));
  }
  result.final_loss = result.trace.back().total_loss;

  for (std::size_t t = 0; t < task_count; ++t) {
    const NearestCentroid baseline(tasks[t].samples, train[t], tasks[t].classes);
    std::size_t model_hits = 0, baseline_hits = 0;
    for (std::size_t i : held_out[t]) {
      const Sample& s = tasks[t].samples[i];
      model_hits += toy_predict(model, t, s.input) == s.label;
      baseline_hits += baseline.predict(s.input) == s.label;
    }
    const double n = static_cast<double>(held_out[t].size());
    result.accuracy.push_back(static_cast<double>(model_hits) / n);
    result.centroid_accuracy.push_back(static_cast<double>(baseline_hits) / n);
  }
  return result;
}

LosoConfig LosoConfig::reduced(std::size_t width, std::size_t classes) {
  LosoConfig c;
  c.mixer.layers = 1;
  c.mixer.cross_heads = 1;
  c.mixer.self_heads = 2;
  c.mixer.self_blocks = 1;
  c.mixer.latents = 8;
  c.mixer.latent_dim = 32;
  c.mixer.input_dim = width;
  c.mixer.output_dim = 32;
  c.mixer.classes = classes;
  c.mixer.mlp_ratio = 2;
  return c;
}

LosoReport run_loso(const SyntheticTask& task, const LosoConfig& config) {
  config.mixer.validate();
  require(config.mixer.classes == task.classes, "Mixer class count differs from the task");
  require(config.epochs >= 3 && config.batch >= 1, "LOSO training needs at least three epochs and a batch");
  for (const Sample& s : task.samples)
    require(s.input.rank() == 2 && s.input.dim(1) == config.mixer.input_dim,
            "LOSO samples must be token matrices of width " + std::to_string(config.mixer.input_dim));

  LosoReport report;
  std::vector<Metrics> model_metrics, baseline_metrics;
  for (const Fold& fold : loso_split(task.subject_ids())) {
    MixerParams mixer = init_mixer(config.mixer, derive_seed(config.seed, indexed("loso.fold", fold.subject)));
    OptimizerState opt = make_adamw(mixer.weights);
    Rng shuffle_rng(config.seed, indexed("loso.shuffle", fold.subject));

    ScheduleConfig schedule;
    schedule.base_lr = config.base_lr;
    schedule.total_epochs = config.epochs;
    schedule.warmup_epochs = std::max<std::size_t>(1, config.epochs / 10);
    schedule.cooldown_epochs = std::max<std::size_t>(1, config.epochs / 10);
    schedule.steps_per_epoch = (fold.train.size() + config.batch - 1) / config.batch;

    std::vector<std::size_t> order = fold.train;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
        const std::size_t end = std::min(order.size(), begin + config.batch);
        ad::Tape tape(DType::f32);
        BoundParameters p(tape, mixer.weights, true);
        ad::Var sum;
        for (std::size_t i = begin; i < end; ++i) {
          const Sample& s = task.samples[order[i]];
          const MixerOutput out = embedding_mixer_forward(tape.constant(s.input), p, config.mixer);
          ad::Var ce = ad::label_smoothing_ce(out.logits, s.label, config.label_smoothing);
          sum = sum.valid() ? ad::add(sum, ce) : ce;
        }
        tape.backward(ad::scale(sum, 1.0 / static_cast<double>(end - begin)));
        adamw_step(mixer.weights, p.gradients(), opt, cosine_lr(static_cast<double>(++step), schedule));
      }
    }

    const NearestCentroid baseline(task.samples, fold.train, task.classes);
    std::vector<std::size_t> truth, model_pred, baseline_pred;
    for (std::size_t i : fold.test) {
      const Sample& s = task.samples[i];
      truth.push_back(s.label);
      model_pred.push_back(argmax(mixer_evaluate(mixer, s.input).logits));
      baseline_pred.push_back(baseline.predict(s.input));
    }
    FoldReport fr{fold.subject, classification_metrics(truth, model_pred), classification_metrics(truth, baseline_pred)};
    model_metrics.push_back(fr.model);
    baseline_metrics.push_back(fr.baseline);
    report.folds.push_back(fr);
  }
  report.model_mean = mean_metrics(model_metrics);
  report.baseline_mean = mean_metrics(baseline_metrics);
  return report;
}

}  // namespace painformer
