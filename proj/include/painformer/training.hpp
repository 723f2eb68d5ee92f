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
#include <span>
#include <string>
#include <vector>

#include "painformer/autodiff.hpp"
#include "painformer/params.hpp"
#include "painformer/tensor.hpp"

namespace painformer {

// Cross-entropy against a target of 1 - epsilon on the true class and
// epsilon / (K - 1) on every other class.
double label_smoothing_ce(const Tensor& logits, std::size_t target, double epsilon);

// standard: sum_i exp(-w_i) L_i + w_i (homoscedastic uncertainty weighting).
// verbatim: sum_i exp(+w_i) L_i + w_i, the sign as printed in the paper; it is
// monotone in w_i and unbounded below, so it is kept for comparison only.
enum class MultitaskMode { standard, verbatim };

MultitaskMode parse_multitask_mode(const std::string& name);
std::string to_string(MultitaskMode mode);

double multitask_loss(std::span<const double> losses, std::span<const double> weights, MultitaskMode mode);
// `losses` are scalar nodes, `weights` a [T] node.
ad::Var multitask_loss(std::span<const ad::Var> losses, ad::Var weights, MultitaskMode mode);

struct ScheduleConfig {
  double base_lr = 2e-5;
  double min_lr_ratio = 0.01;
  std::size_t warmup_epochs = 5;
  std::size_t cooldown_epochs = 10;
  std::size_t total_epochs = 200;
  std::size_t steps_per_epoch = 1;

  double min_lr() const { return base_lr * min_lr_ratio; }
  std::size_t total_steps() const { return total_epochs * steps_per_epoch; }
  void validate() const;
};

// Linear warmup from 0, cosine decay to min_lr, then constant min_lr for the
// cooldown epochs. `step` may be fractional.
double cosine_lr(double step, const ScheduleConfig& config);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

// Which tensors receive decoupled weight decay.
enum class DecayPolicy { all, matrices_only };

struct OptimizerState {
  AdamWConfig config;
  std::size_t step = 0;
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::vector<std::string> decayed;
};

OptimizerState make_adamw(const ParameterSet& params, const AdamWConfig& config = {},
                          DecayPolicy policy = DecayPolicy::matrices_only);

// param -= lr * wd * param (decoupled) and param -= lr * m_hat / (sqrt(v_hat) + eps).
void adamw_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state, double lr);

// Eager counterparts of the tape regularizers, driven by a seed.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool training);
Tensor droppath(const Tensor& branch, double rate, std::uint64_t seed, bool training);

// Per-task batch sizes proportional to task sizes (largest remainder, at
// least one sample per task).
std::vector<std::size_t> apportion_batch(std::size_t batch, std::span<const std::size_t> task_sizes);

struct Metrics {
  double accuracy = 0.0;
  double recall = 0.0;  // macro
  double f1 = 0.0;      // macro
};

// Macro averages run over the labels present in either truth or prediction;
// undefined precision or recall counts as 0.
Metrics classification_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

}  // namespace painformer
