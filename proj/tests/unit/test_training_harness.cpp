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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "painformer/error.hpp"
#include "painformer/experiments.hpp"
#include "painformer/training.hpp"
#include "support/oracles.hpp"

using namespace painformer;
using painformer::testing::random_tensor;

namespace {

Tensor vec(std::initializer_list<double> values, DType dtype = DType::f64) {
  return Tensor({values.size()}, std::vector<double>(values), dtype);
}

double neg_log_softmax(const std::vector<double>& z, std::size_t target) {
  double denom = 0.0;
  for (double v : z) denom += std::exp(v);
  return -(z[target] - std::log(denom));
}

// Plain gradient descent on w with every L_i held fixed, gradients from the tape.
std::vector<double> descend_weights(const std::vector<double>& losses, MultitaskMode mode, std::size_t steps,
                                    double lr) {
  std::vector<double> w(losses.size(), 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    ad::Tape tape(DType::f64);
    ad::Var wv = tape.variable(Tensor({w.size()}, w, DType::f64));
    std::vector<ad::Var> lv;
    for (double l : losses) lv.push_back(tape.constant(vec({l})));
    tape.backward(multitask_loss(lv, wv, mode));
    const Tensor g = tape.grad(wv);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  }
  return w;
}

ScheduleConfig paper_schedule() {
  ScheduleConfig c;
  c.steps_per_epoch = 10;
  return c;
}

// Separate loop implementation of bias-corrected Adam with decoupled decay.
struct ReferenceAdam {
  double m = 0.0, v = 0.0;
  std::size_t t = 0;
  double step(double p, double g, double lr, double wd) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    return p - lr * wd * p - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

ParameterSet single(const std::string& name, Tensor t) {
  ParameterSet p;
  p.add(name, std::move(t));
  return p;
}

std::vector<SyntheticTask> tiny_image_tasks(std::uint64_t seed) {
  const std::vector<TaskSpec> specs{{2, 2, 10, 4.0}, {3, 2, 10, 4.0}};
  return generate_synthetic_tasks(specs, {32, 32, 3}, seed);
}

ToyTrainingConfig tiny_training() {
  ToyTrainingConfig c;
  c.epochs = 3;
  c.batch = 8;
  return c;
}

}  // namespace

TEST_CASE("label smoothing with epsilon 0 is the negative log softmax") {
  const Tensor z = random_tensor({5}, 11, 2.0);
  const std::vector<double> values(z.data().begin(), z.data().end());
  for (std::size_t t = 0; t < 5; ++t) CHECK(std::abs(label_smoothing_ce(z, t, 0.0) - neg_log_softmax(values, t)) < 1e-7);
}

TEST_CASE("uniform logits give ln K for any target and epsilon") {
  for (std::size_t k : {2u, 3u, 7u})
    for (double eps : {0.0, 0.1, 0.5, 0.9}) {
      const Tensor z({k}, std::vector<double>(k, 0.75), DType::f64);
      CHECK(std::abs(label_smoothing_ce(z, k - 1, eps) - std::log(static_cast<double>(k))) < 1e-6);
    }
}

TEST_CASE("two-class smoothed loss matches hand arithmetic") {
  const double p0 = std::exp(2.0) / (std::exp(2.0) + 1.0);
  const double expected = -(0.9 * std::log(p0) + 0.1 * std::log(1.0 - p0));
  CHECK(std::abs(label_smoothing_ce(vec({2.0, 0.0}), 0, 0.1) - expected) < 1e-6);
  // Off-target mass is epsilon / (K - 1), not epsilon / K.
  const Tensor z = vec({0.3, -1.0, 2.0});
  const std::vector<double> values{0.3, -1.0, 2.0};
  const double smoothed = 0.8 * neg_log_softmax(values, 2) + 0.1 * neg_log_softmax(values, 0) +
                          0.1 * neg_log_softmax(values, 1);
  CHECK(std::abs(label_smoothing_ce(z, 2, 0.2) - smoothed) < 1e-9);
}

TEST_CASE("label smoothing rejects bad targets, epsilons and class counts") {
  CHECK_THROWS_AS(label_smoothing_ce(vec({1.0, 2.0}), 2, 0.1), ContractViolation);
  CHECK_THROWS_AS(label_smoothing_ce(vec({1.0, 2.0}), 0, 1.0), ContractViolation);
  CHECK_THROWS_AS(label_smoothing_ce(vec({1.0, 2.0}), 0, -0.1), ContractViolation);
  CHECK_THROWS_AS(label_smoothing_ce(vec({1.0}), 0, 0.0), ContractViolation);
}

TEST_CASE("zero task weights reduce the aggregate to the plain sum") {
  const std::vector<double> losses{0.25, 1.5, 3.0, 0.0};
  const std::vector<double> zeros(losses.size(), 0.0);
  const double plain = 0.25 + 1.5 + 3.0 + 0.0;
  CHECK(multitask_loss(losses, zeros, MultitaskMode::standard) == plain);
  CHECK(multitask_loss(losses, zeros, MultitaskMode::verbatim) == plain);

  ad::Tape tape(DType::f64);
  std::vector<ad::Var> lv;
  for (double l : losses) lv.push_back(tape.constant(vec({l})));
  CHECK(multitask_loss(lv, tape.variable(Tensor({4}, DType::f64)), MultitaskMode::standard).value()[0] == plain);
}

TEST_CASE("both modes follow their closed forms") {
  const std::vector<double> losses{0.4, 2.0};
  const std::vector<double> w{0.3, -0.7};
  CHECK(multitask_loss(losses, w, MultitaskMode::standard) ==
        doctest::Approx(std::exp(-0.3) * 0.4 + 0.3 + std::exp(0.7) * 2.0 - 0.7).epsilon(1e-14));
  CHECK(multitask_loss(losses, w, MultitaskMode::verbatim) ==
        doctest::Approx(std::exp(0.3) * 0.4 + 0.3 + std::exp(-0.7) * 2.0 - 0.7).epsilon(1e-14));
  CHECK_THROWS_AS(multitask_loss(losses, std::vector<double>{0.0}, MultitaskMode::standard), ContractViolation);
  CHECK_THROWS_AS(multitask_loss(std::vector<double>{-1.0}, std::vector<double>{0.0}, MultitaskMode::standard),
                  ContractViolation);
  CHECK(parse_multitask_mode("verbatim") == MultitaskMode::verbatim);
  CHECK(to_string(parse_multitask_mode("standard")) == "standard");
  CHECK_THROWS_AS(parse_multitask_mode("printed"), ContractViolation);
}

TEST_CASE("standard-mode weights descend to ln L and keep its ordering") {
  const std::vector<double> losses{0.3, 1.0, 2.5, 0.05};
  const std::vector<double> w = descend_weights(losses, MultitaskMode::standard, 4000, 0.5);
  for (std::size_t i = 0; i < losses.size(); ++i) CHECK(std::abs(w[i] - std::log(losses[i])) < 1e-4);
  std::vector<std::size_t> by_w(losses.size()), by_loss(losses.size());
  std::iota(by_w.begin(), by_w.end(), 0);
  std::iota(by_loss.begin(), by_loss.end(), 0);
  std::sort(by_w.begin(), by_w.end(), [&](auto a, auto b) { return w[a] < w[b]; });
  std::sort(by_loss.begin(), by_loss.end(), [&](auto a, auto b) { return losses[a] < losses[b]; });
  CHECK(by_w == by_loss);
}

TEST_CASE("the printed sign has no stationary point and drifts downward") {
  const std::vector<double> w = descend_weights({0.5, 2.0}, MultitaskMode::verbatim, 200, 0.1);
  CHECK(w[0] < -1.0);
  CHECK(w[1] < -1.0);
  CHECK(multitask_loss(std::vector<double>{0.5}, std::vector<double>{-50.0}, MultitaskMode::verbatim) < -49.0);
}

TEST_CASE("task-weight gradients match finite differences in both modes with 14 tasks") {
  const std::size_t tasks = 14;
  const Tensor losses = random_tensor({tasks}, 3, 1.0);
  const Tensor w = random_tensor({tasks}, 4, 0.8);
  for (MultitaskMode mode : {MultitaskMode::standard, MultitaskMode::verbatim}) {
    std::vector<double> l(tasks), wv(w.data().begin(), w.data().end());
    for (std::size_t i = 0; i < tasks; ++i) l[i] = std::abs(losses[i]) + 0.1;

    ad::Tape tape(DType::f64);
    ad::Var wvar = tape.variable(w);
    std::vector<ad::Var> lv;
    for (double x : l) lv.push_back(tape.constant(vec({x})));
    ad::Var total = multitask_loss(lv, wvar, mode);
    CHECK(std::abs(total.value()[0] - multitask_loss(l, wv, mode)) < 1e-12);
    tape.backward(total);
    const Tensor g = tape.grad(wvar);

    const double h = 1e-6;
    for (std::size_t i = 0; i < tasks; ++i) {
      std::vector<double> up = wv, down = wv;
      up[i] += h;
      down[i] -= h;
      const double fd = (multitask_loss(l, up, mode) - multitask_loss(l, down, mode)) / (2.0 * h);
      CHECK(std::abs(g[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("loss gradients flow to the task losses too") {
  ad::Tape tape(DType::f64);
  ad::Var l0 = tape.variable(vec({0.7})), l1 = tape.variable(vec({1.3}));
  ad::Var w = tape.variable(vec({0.2, -0.4}));
  const std::vector<ad::Var> lv{l0, l1};
  tape.backward(multitask_loss(lv, w, MultitaskMode::standard));
  CHECK(tape.grad(l0)[0] == doctest::Approx(std::exp(-0.2)).epsilon(1e-14));
  CHECK(tape.grad(l1)[0] == doctest::Approx(std::exp(0.4)).epsilon(1e-14));
}

TEST_CASE("cosine schedule hits its anchor values") {
  const ScheduleConfig c = paper_schedule();
  CHECK(c.base_lr == 2e-5);
  CHECK(c.min_lr() == doctest::Approx(2e-7).epsilon(1e-12));
  const double warm = 5 * 10, decay_end = (200 - 10) * 10;
  CHECK(cosine_lr(0, c) == 0.0);
  CHECK(cosine_lr(warm, c) == c.base_lr);
  CHECK(cosine_lr(warm / 2, c) == doctest::Approx(c.base_lr / 2).epsilon(1e-14));
  CHECK(std::abs(cosine_lr((warm + decay_end) / 2, c) - (c.base_lr + c.min_lr()) / 2) < 1e-12);
  for (double s : {decay_end, decay_end + 1, 2000.0 - 1, 2000.0}) CHECK(cosine_lr(s, c) == c.min_lr());
}

TEST_CASE("cosine schedule is continuous at phase boundaries and decays monotonically") {
  const ScheduleConfig c = paper_schedule();
  for (double boundary : {50.0, 1900.0}) {
    const double left = cosine_lr(std::nextafter(boundary, 0.0), c);
    CHECK(std::abs(left - cosine_lr(boundary, c)) < 1e-12 * c.base_lr);
  }
  double previous = cosine_lr(50, c);
  for (std::size_t s = 51; s <= 2000; ++s) {
    const double lr = cosine_lr(static_cast<double>(s), c);
    CHECK(lr <= previous);
    CHECK(lr >= c.min_lr());
    previous = lr;
  }
}

TEST_CASE("schedule validation rejects impossible configurations") {
  ScheduleConfig c = paper_schedule();
  c.warmup_epochs = 100;
  c.cooldown_epochs = 100;
  CHECK_THROWS_AS(cosine_lr(0, c), ContractViolation);
  c = paper_schedule();
  CHECK_THROWS_AS(cosine_lr(2001, c), ContractViolation);
  CHECK_THROWS_AS(cosine_lr(-1, c), ContractViolation);
  c.base_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
}

TEST_CASE("AdamW leaves parameters alone under zero gradient and no decay") {
  ParameterSet p;
  p.add("w", random_tensor({3, 4}, 1));
  p.add("b", random_tensor({4}, 2));
  const ParameterSet before = p;
  ParameterSet g;
  g.add("w", Tensor({3, 4}, DType::f64));
  g.add("b", Tensor({4}, DType::f64));
  OptimizerState s = make_adamw(p, {0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) adamw_step(p, g, s, 0.1);
  CHECK(p.at("w").data()[0] == before.at("w").data()[0]);
  for (const std::string& n : p.names())
    CHECK(std::equal(p.at(n).data().begin(), p.at(n).data().end(), before.at(n).data().begin()));
  CHECK(s.step == 5);
}

TEST_CASE("first AdamW step on a scalar moves it by lr / (1 + eps)") {
  ParameterSet p = single("x", vec({1.0}));
  OptimizerState s = make_adamw(p, {0.9, 0.999, 1e-8, 0.0}, DecayPolicy::all);
  adamw_step(p, single("x", vec({1.0})), s, 0.1);
  const double m_hat = (0.1 * 1.0) / (1.0 - 0.9), v_hat = (0.001 * 1.0) / (1.0 - 0.999);
  const double expected = 1.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(std::abs(p.at("x")[0] - expected) < 1e-9);
  CHECK(std::abs((1.0 - p.at("x")[0]) - 0.1) < 1e-8);
}

TEST_CASE("decoupled decay subtracts lr * wd * param whatever the gradient") {
  const Tensor start = random_tensor({4, 3}, 9);
  for (std::uint64_t gseed : {20u, 21u}) {
    const ParameterSet grad = single("w", random_tensor({4, 3}, gseed));
    ParameterSet decayed = single("w", start), plain = single("w", start);
    OptimizerState sd = make_adamw(decayed, {0.9, 0.999, 1e-8, 0.1});
    OptimizerState sp = make_adamw(plain, {0.9, 0.999, 1e-8, 0.0});
    adamw_step(decayed, grad, sd, 0.01);
    adamw_step(plain, grad, sp, 0.01);
    for (std::size_t i = 0; i < start.size(); ++i)
      CHECK(std::abs((decayed.at("w")[i] - plain.at("w")[i]) - (-0.01 * 0.1 * start[i])) < 1e-15);
  }
}

TEST_CASE("matrix-only policy skips vectors and matches a loop reference over several steps") {
  ParameterSet p;
  p.add("w", vec({0.5, -2.0}).reshaped({1, 2}));
  p.add("task.w", vec({0.5, -2.0}));
  OptimizerState s = make_adamw(p, {0.9, 0.999, 1e-8, 0.1});
  CHECK(s.decayed == std::vector<std::string>{"w"});
  CHECK(s.first_moment.at("w").shape() == p.at("w").shape());
  ReferenceAdam ref_w[2], ref_t[2];
  double rw[2] = {0.5, -2.0}, rt[2] = {0.5, -2.0};
  const double grads[3][2] = {{0.3, -1.0}, {0.0, 2.0}, {-0.7, 0.1}};
  for (const auto& gstep : grads) {
    ParameterSet g;
    g.add("w", vec({gstep[0], gstep[1]}).reshaped({1, 2}));
    g.add("task.w", vec({gstep[0], gstep[1]}));
    adamw_step(p, g, s, 0.05);
    for (int i = 0; i < 2; ++i) {
      rw[i] = ref_w[i].step(rw[i], gstep[i], 0.05, 0.1);
      rt[i] = ref_t[i].step(rt[i], gstep[i], 0.05, 0.0);
    }
  }
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(p.at("w")[i] - rw[i]) < 1e-12);
    CHECK(std::abs(p.at("task.w")[i] - rt[i]) < 1e-12);
  }
}

TEST_CASE("AdamW rejects misaligned gradients and is bit-reproducible") {
  ParameterSet p = single("w", random_tensor({2, 2}, 5));
  OptimizerState s = make_adamw(p);
  CHECK_THROWS_AS(adamw_step(p, single("w", Tensor({4}, DType::f64)), s, 0.1), ContractViolation);
  CHECK_THROWS_AS(adamw_step(p, single("v", Tensor({2, 2}, DType::f64)), s, 0.1), ContractViolation);

  auto run = [] {
    ParameterSet q = single("w", random_tensor({5, 5}, 6));
    OptimizerState st = make_adamw(q);
    for (std::uint64_t i = 0; i < 4; ++i) adamw_step(q, single("w", random_tensor({5, 5}, 100 + i)), st, 0.01);
    return q.at("w");
  };
  const Tensor a = run(), b = run();
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("dropout and droppath are exact identities in eval mode or at rate 0") {
  const Tensor x = random_tensor({6, 7}, 8, 1.0, DType::f32);
  for (const Tensor& y : {dropout(x, 0.5, 1, false), dropout(x, 0.0, 1, true), droppath(x, 0.5, 1, false),
                          droppath(x, 0.0, 1, true)}) {
    REQUIRE(y.shape() == x.shape());
    CHECK(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
  }
  CHECK_THROWS_AS(dropout(x, 1.0, 1, true), ContractViolation);
  CHECK_THROWS_AS(droppath(x, -0.1, 1, true), ContractViolation);
}

TEST_CASE("dropout and droppath are unbiased over 10000 seeded draws") {
  const Tensor x = vec({1.0, -2.0, 0.5, 3.0});
  std::vector<double> drop_mean(4, 0.0), path_mean(4, 0.0);
  std::size_t zeros = 0, whole_branch = 0;
  const std::size_t draws = 10000;
  for (std::uint64_t seed = 0; seed < draws; ++seed) {
    const Tensor d = dropout(x, 0.5, seed, true), p = droppath(x, 0.5, seed, true);
    bool all_zero = true, all_scaled = true;
    for (std::size_t i = 0; i < 4; ++i) {
      drop_mean[i] += d[i] / draws;
      path_mean[i] += p[i] / draws;
      zeros += d[i] == 0.0;
      CHECK((d[i] == 0.0 || d[i] == 2.0 * x[i]));
      all_zero = all_zero && p[i] == 0.0;
      all_scaled = all_scaled && p[i] == 2.0 * x[i];
    }
    whole_branch += all_zero || all_scaled;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(drop_mean[i] - x[i]) <= 0.02 * std::abs(x[i]) + 0.02);
    CHECK(std::abs(path_mean[i] - x[i]) <= 0.02 * std::abs(x[i]) + 0.02);
  }
  CHECK(whole_branch == draws);
  CHECK(std::abs(static_cast<double>(zeros) / (4.0 * draws) - 0.5) < 0.01);
}

TEST_CASE("batch apportionment is proportional with at least one sample per task") {
  const std::vector<std::size_t> equal(14, 500);
  CHECK(apportion_batch(126, equal) == std::vector<std::size_t>(14, 9));

  const std::vector<std::size_t> skewed{1000, 10, 10, 300};
  const auto share = apportion_batch(32, skewed);
  CHECK(std::accumulate(share.begin(), share.end(), std::size_t{0}) == 32);
  CHECK(share[1] >= 1);
  CHECK(share[2] >= 1);
  CHECK(share[0] > share[3]);
  CHECK(share[3] > share[1]);

  for (std::size_t batch = 3; batch < 40; ++batch) {
    const std::vector<std::size_t> sizes{7, 1, 13};
    const auto s = apportion_batch(batch, sizes);
    CHECK(std::accumulate(s.begin(), s.end(), std::size_t{0}) == batch);
    CHECK(*std::min_element(s.begin(), s.end()) >= 1);
  }
  CHECK_THROWS_AS(apportion_batch(2, std::vector<std::size_t>{1, 1, 1}), ContractViolation);
  CHECK_THROWS_AS(apportion_batch(4, std::vector<std::size_t>{1, 0}), ContractViolation);
}

TEST_CASE("classification metrics match a hand-worked confusion matrix") {
  // truth 0 0 0 1 1 2 ; predicted 0 0 1 1 2 2
  const std::vector<std::size_t> truth{0, 0, 0, 1, 1, 2}, pred{0, 0, 1, 1, 2, 2};
  const Metrics m = classification_metrics(truth, pred);
  CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(m.recall == doctest::Approx((2.0 / 3.0 + 0.5 + 1.0) / 3.0));
  const double f0 = 2 * 1.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0), f1 = 0.5, f2 = 2 * 0.5 * 1.0 / 1.5;
  CHECK(m.f1 == doctest::Approx((f0 + f1 + f2) / 3.0));

  const Metrics perfect = classification_metrics(truth, truth);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK_THROWS_AS(classification_metrics(truth, std::vector<std::size_t>{0}), ContractViolation);
}

TEST_CASE("synthetic tasks are counted, labelled and regenerated bit-identically") {
  const std::vector<TaskSpec> specs{{2, 10, 20, 4.0}, {3, 4, 6, 2.0}};
  const auto a = generate_synthetic_tasks(specs, {4, 16}, 99);
  const auto b = generate_synthetic_tasks(specs, {4, 16}, 99);
  REQUIRE(a.size() == 2);
  CHECK(a[0].samples.size() == 200);
  const auto ids = a[0].subject_ids();
  CHECK(std::set<std::size_t>(ids.begin(), ids.end()) == std::set<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  for (std::size_t s = 0; s < 10; ++s) CHECK(std::count(ids.begin(), ids.end(), s) == 20);
  const auto labels = a[1].labels();
  CHECK(std::set<std::size_t>(labels.begin(), labels.end()) == std::set<std::size_t>{0, 1, 2});
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(a[t].seed == b[t].seed);
    for (std::size_t i = 0; i < a[t].samples.size(); ++i) {
      const Tensor& x = a[t].samples[i].input;
      CHECK(x.shape() == Shape{4, 16});
      CHECK(std::equal(x.data().begin(), x.data().end(), b[t].samples[i].input.data().begin()));
    }
  }
  const auto c = generate_synthetic_tasks(specs, {4, 16}, 100);
  CHECK(c[0].samples[0].input[0] != a[0].samples[0].input[0]);
  CHECK_THROWS_AS(generate_synthetic_tasks(std::vector<TaskSpec>{{2, 2, 2, 0.0}}, {4}, 1), ContractViolation);
}

TEST_CASE("separation 4 data is separable by nearest centroid") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto tasks = generate_synthetic_tasks(std::vector<TaskSpec>{{2, 10, 20, 4.0}}, {32, 32, 3}, seed);
    const auto& samples = tasks[0].samples;
    std::vector<std::size_t> all(samples.size());
    std::iota(all.begin(), all.end(), 0);
    const NearestCentroid baseline(samples, all, 2);
    std::size_t hits = 0;
    for (const Sample& s : samples) hits += baseline.predict(s.input) == s.label;
    CHECK(static_cast<double>(hits) / samples.size() > 0.95);
  }
  // Low separation stays close to chance, so the margin is genuinely the separation's doing.
  const auto weak = generate_synthetic_tasks(std::vector<TaskSpec>{{2, 10, 20, 0.1}}, {8}, 4);
  std::vector<std::size_t> all(weak[0].samples.size());
  std::iota(all.begin(), all.end(), 0);
  const NearestCentroid baseline(weak[0].samples, all, 2);
  std::size_t hits = 0;
  for (const Sample& s : weak[0].samples) hits += baseline.predict(s.input) == s.label;
  CHECK(static_cast<double>(hits) / 200.0 < 0.75);
}

TEST_CASE("LOSO folds partition the data for every subject count up to 12") {
  for (std::size_t subjects = 2; subjects <= 12; ++subjects) {
    // Uneven, interleaved subject assignment.
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < subjects * 3 + 5; ++i) ids.push_back((i * 7 + i / 3) % subjects);
    for (std::size_t s = 0; s < subjects; ++s) ids.push_back(s);
    const auto folds = loso_split(ids);
    REQUIRE(folds.size() == subjects);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const Fold& fold = folds[f];
      CHECK(fold.subject == f);
      std::vector<std::size_t> both = fold.train;
      both.insert(both.end(), fold.test.begin(), fold.test.end());
      std::sort(both.begin(), both.end());
      std::vector<std::size_t> expected(ids.size());
      std::iota(expected.begin(), expected.end(), 0);
      CHECK(both == expected);
      for (std::size_t i : fold.test) CHECK(ids[i] == fold.subject);
      for (std::size_t i : fold.train) CHECK(ids[i] != fold.subject);
    }
  }
}

TEST_CASE("LOSO handles 87 subjects and refuses a single one") {
  std::vector<std::size_t> ids;
  for (std::size_t s = 0; s < 87; ++s)
    for (int k = 0; k < 3; ++k) ids.push_back(86 - s);
  const auto folds = loso_split(ids);
  CHECK(folds.size() == 87);
  for (const Fold& f : folds) {
    CHECK(f.test.size() == 3);
    CHECK(f.train.size() == ids.size() - 3);
  }
  CHECK_THROWS_AS(loso_split(std::vector<std::size_t>{4, 4, 4}), ContractViolation);
  CHECK_THROWS_AS(loso_split(std::vector<std::size_t>{}), ContractViolation);
}

TEST_CASE("toy training is reproducible per seed and emits a complete trace") {
  const auto tasks = tiny_image_tasks(5);
  const ToyTrainingConfig config = tiny_training();
  const ToyTrainingResult a = train_toy_multitask(tasks, config);
  const ToyTrainingResult b = train_toy_multitask(tasks, config);
  CHECK(a.final_loss == b.final_loss);
  REQUIRE(a.trace.size() == b.trace.size());
  // 16 training samples per task, batch 8: four steps per epoch.
  CHECK(a.trace.size() == 12);
  for (std::size_t s = 0; s < a.trace.size(); ++s) {
    CHECK(a.trace[s].losses == b.trace[s].losses);
    CHECK(a.trace[s].weights.size() == 2);
  }
  CHECK(a.accuracy.size() == 2);
  CHECK(a.model.heads.contains("task.w"));
  CHECK(a.model.heads.at("aux1.weight").shape() == Shape{32, 3});

  std::ostringstream out;
  write_trace_jsonl(a.trace, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto record = nlohmann::json::parse(line);
    CHECK(record.at("step").get<std::size_t>() == ++lines);
    CHECK(record.at("loss").size() == 2);
    CHECK(record.at("w").size() == 2);
    CHECK(record.at("accuracy").size() == 2);
    CHECK(record.contains("lr"));
  }
  CHECK(lines == a.trace.size());

  ToyTrainingConfig other = config;
  other.seed = 8;
  CHECK(train_toy_multitask(tasks, other).final_loss != a.final_loss);
}

TEST_CASE("toy training rejects samples that do not fit the backbone") {
  const auto tasks = generate_synthetic_tasks(std::vector<TaskSpec>{{2, 2, 10, 4.0}}, {16, 16, 3}, 1);
  CHECK_THROWS_AS(train_toy_multitask(tasks, tiny_training()), ContractViolation);
  CHECK_THROWS_AS(train_toy_multitask({}, tiny_training()), ContractViolation);
}

TEST_CASE("LOSO with a small Mixer matches the centroid baseline on well-separated subjects") {
  const auto tasks = generate_synthetic_tasks(std::vector<TaskSpec>{{2, 5, 20, 8.0}}, {4, 16}, 2);
  LosoConfig config = LosoConfig::reduced(16, 2);
  config.seed = 2;
  const LosoReport report = run_loso(tasks[0], config);
  CHECK(report.folds.size() == 5);
  for (std::size_t f = 0; f < 5; ++f) CHECK(report.folds[f].subject == f);
  CHECK(report.model_mean.accuracy >= report.baseline_mean.accuracy);
  CHECK(report.baseline_mean.accuracy > 0.95);
  CHECK(report.model_mean.f1 <= 1.0);

  CHECK_THROWS_AS(run_loso(tasks[0], LosoConfig::reduced(8, 2)), ContractViolation);
  CHECK_THROWS_AS(run_loso(tasks[0], LosoConfig::reduced(16, 3)), ContractViolation);
}
