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

#include "painformer/params.hpp"

#include <cmath>

#include "painformer/error.hpp"

namespace painformer {

void ParameterSet::add(std::string name, Tensor value) {
  require(!contains(name), "duplicate parameter name '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter '" + name + "'");
  return values_[it->second];
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter '" + name + "'");
  return values_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

std::size_t ParameterSet::scalar_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (std::string_view(names_[i]).starts_with(prefix)) n += values_[i].size();
  return n;
}

void ParameterSet::merge(const ParameterSet& other, const std::string& prefix) {
  for (std::size_t i = 0; i < other.names_.size(); ++i) add(prefix + other.names_[i], other.values_[i]);
}

ParameterSet ParameterSet::extract(const std::string& prefix) const {
  ParameterSet out;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].starts_with(prefix)) out.add(names_[i].substr(prefix.size()), values_[i]);
  return out;
}

BoundParameters::BoundParameters(ad::Tape& tape, const ParameterSet& params, bool trainable)
    : tape_(&tape), names_(params.names()) {
  for (const std::string& name : names_) {
    const Tensor& value = params.at(name);
    vars_.emplace(name, trainable ? tape.variable(value) : tape.constant(value));
  }
}

ad::Var BoundParameters::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  require(it != vars_.end(), "parameter '" + name + "' is not bound");
  return it->second;
}

ParameterSet BoundParameters::gradients() const {
  ParameterSet out;
  for (const std::string& name : names_) out.add(name, tape_->grad(vars_.at(name)));
  return out;
}

Tensor init_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape), DType::f64);
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

Tensor init_fan_in(Shape shape, Rng& rng) {
  std::size_t fan_in = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
  return init_normal(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace painformer
