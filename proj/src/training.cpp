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


#include "painformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "painformer/error.hpp"
#include "painformer/rng.hpp"

namespace painformer {

double label_smoothing_ce(const Tensor& logits, std::size_t target, double epsilon) {
  ad::Tape tape(DType::f64);
  return ad::label_smoothing_ce(tape.constant(logits.reshaped({logits.size()})), target, epsilon).value()[0];
}

MultitaskMode parse_multitask_mode(const std::string& name) {
  if (name == "standard") return MultitaskMode::standard;
  if (name == "verbatim") return MultitaskMode::verbatim;
  throw ContractViolation("unknown multitask mode '" + name + "' (expected standard or verbatim)");
}

std::string to_string(MultitaskMode mode) {
  return mode == MultitaskMode::standard ? "standard" : "verbatim";
}

double multitask_loss(std::span<const double> losses, std::span<const double> weights, MultitaskMode mode) {
  require(losses.size() == weights.size(), "multitask loss needs one weight per task");
  const double sign = mode == MultitaskMode::standard ? -1.0 : 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    require(losses[i] >= 0.0, "task losses must be nonnegative");
    total += std::exp(sign * weights[i]) * losses[i] + weights[i];
  }
  return total;
}

ad::Var multitask_loss(std::span<const ad::Var> losses, ad::Var weights, MultitaskMode mode) {
  require(!losses.empty() && weights.value().size() == losses.size(), "multitask loss needs one weight per task");
  const double sign = mode == MultitaskMode::standard ? -1.0 : 1.0;
  ad::Var total;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    require(losses[i].value().size() == 1, "task losses must be scalars");
    ad::Var w = ad::element(weights, i);
    ad::Var term = ad::add(ad::mul(ad::exp(ad::scale(w, sign)), ad::reshape(losses[i], {1})), w);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

void ScheduleConfig::validate() const {
  require(base_lr > 0.0, "base learning rate must be positive");
  require(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0, "min_lr_ratio must lie in [0, 1]");
  require(steps_per_epoch >= 1, "steps_per_epoch must be positive");
  require(warmup_epochs + cooldown_epochs < total_epochs, "warmup + cooldown must be shorter than training");
}

double cosine_lr(double step, const ScheduleConfig& c) {
  c.validate();
  const double total = static_cast<double>(c.total_steps());
  require(step >= 0.0 && step <= total, "step outside the schedule");
  const double warmup = static_cast<double>(c.warmup_epochs * c.steps_per_epoch);
  const double decay_end = total - static_cast<double>(c.cooldown_epochs * c.steps_per_epoch);
  if (step < warmup) return c.base_lr * step / warmup;
  if (step >= decay_end) return c.min_lr();
  const double progress = (step - warmup) / (decay_end - warmup);
  return c.min_lr() + 0.5 * (c.base_lr - c.min_lr()) * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState make_adamw(const ParameterSet& params, const AdamWConfig& config, DecayPolicy policy) {
  require(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0,
          "Adam betas must lie in [0, 1)");
  require(config.eps > 0.0 && config.weight_decay >= 0.0, "invalid AdamW eps or weight decay");
  OptimizerState state;
  state.config = config;
  for (const std::string& name : params.names()) {
    const Tensor& p = params.at(name);
    state.first_moment.add(name, Tensor(p.shape(), DType::f64));
    state.second_moment.add(name, Tensor(p.shape(), DType::f64));
    if (policy == DecayPolicy::all || p.rank() >= 2) state.decayed.push_back(name);
  }
  return state;
}

void adamw_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state, double lr) {
  require(params.size() == state.first_moment.size(), "optimizer state does not match the parameter set");
  const AdamWConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const std::set<std::string> decayed(state.decayed.begin(), state.decayed.end());
  for (const std::string& name : params.names()) {
    Tensor& p = params.at(name);
    require(grads.contains(name), "missing gradient for " + name);
    const Tensor& g = grads.at(name);
    require(g.shape() == p.shape(), "gradient for " + name + " has shape " + shape_string(g.shape()) +
                                        ", parameter has " + shape_string(p.shape()));
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    const double decay = decayed.count(name) ? lr * c.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1, v_hat = v[i] / correction2;
      p[i] -= decay * p[i] + lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
    p.round_to_dtype();
  }
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool training) {
  ad::Tape tape(x.dtype());
  Rng rng(seed, "dropout");
  return ad::dropout(tape.constant(x), rate, rng, training).value();
}

Tensor droppath(const Tensor& branch, double rate, std::uint64_t seed, bool training) {
  ad::Tape tape(branch.dtype());
  Rng rng(seed, "droppath");
  return ad::droppath(tape.constant(branch), rate, rng, training).value();
}

std::vector<std::size_t> apportion_batch(std::size_t batch, std::span<const std::size_t> task_sizes) {
  const std::size_t tasks = task_sizes.size();
  require(tasks > 0, "batch apportionment needs at least one task");
  require(batch >= tasks, "batch of " + std::to_string(batch) + " cannot give each of " +
                              std::to_string(tasks) + " tasks a sample");
  for (std::size_t s : task_sizes) require(s > 0, "every task needs at least one sample");
  const double total = static_cast<double>(std::accumulate(task_sizes.begin(), task_sizes.end(), std::size_t{0}));

  // Reserve one sample per task, then distribute the rest by largest remainder.
  const std::size_t spare = batch - tasks;
  std::vector<std::size_t> share(tasks, 1);
  std::vector<double> remainder(tasks);
  std::size_t assigned = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    const double quota = static_cast<double>(spare) * static_cast<double>(task_sizes[t]) / total;
    const auto whole = static_cast<std::size_t>(std::floor(quota));
    share[t] += whole;
    assigned += whole;
    remainder[t] = quota - static_cast<double>(whole);
  }
  std::vector<std::size_t> order(tasks);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < spare; ++i, ++assigned) ++share[order[i]];
  return share;
}

Metrics classification_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
  require(truth.size() == predicted.size() && !truth.empty(), "metrics need equal, non-empty label lists");
  std::set<std::size_t> labels(truth.begin(), truth.end());
  labels.insert(predicted.begin(), predicted.end());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == predicted[i];
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t label : labels) {
    std::size_t tp = 0, support = 0, claimed = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      support += truth[i] == label;
      claimed += predicted[i] == label;
      tp += truth[i] == label && predicted[i] == label;
    }
    const double recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    const double precision = claimed ? static_cast<double>(tp) / static_cast<double>(claimed) : 0.0;
    m.recall += recall;
    m.f1 += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  m.recall /= static_cast<double>(labels.size());
  m.f1 /= static_cast<double>(labels.size());
  return m;
}

}  // namespace painformer
