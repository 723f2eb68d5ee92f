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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "painformer/autodiff.hpp"
#include "painformer/rng.hpp"
#include "painformer/tensor.hpp"

namespace painformer {

// Named learnable tensors in insertion order.
class ParameterSet {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  // Sum of scalar entries, optionally restricted to names with a prefix.
  std::size_t scalar_count() const;
  std::size_t scalar_count(std::string_view prefix) const;

  // Appends every tensor of `other`, names prefixed with `prefix`.
  void merge(const ParameterSet& other, const std::string& prefix = "");
  // Tensors whose names start with `prefix`, with the prefix stripped.
  ParameterSet extract(const std::string& prefix) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Parameters placed on a tape, either as trainable variables or constants.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, const ParameterSet& params, bool trainable);

  ad::Var operator()(const std::string& name) const;
  ad::Tape& tape() const { return *tape_; }

  // d(output)/d(parameter) from the last backward pass, keyed like the source set.
  ParameterSet gradients() const;

 private:
  ad::Tape* tape_;
  std::vector<std::string> names_;
  std::map<std::string, ad::Var, std::less<>> vars_;
};

// Weight initializers.
Tensor init_normal(Shape shape, double stddev, Rng& rng);
// N(0, 1/fan_in) with fan_in = product of all but the last axis.
Tensor init_fan_in(Shape shape, Rng& rng);

}  // namespace painformer
