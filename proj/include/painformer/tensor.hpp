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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace painformer {

using Shape = std::vector<std::size_t>;

// Storage precision. f32 values are rounded to single precision whenever a
// kernel or tape op produces them; f64 keeps full double precision.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major real array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::f32);
  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f32);

  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor vector(std::initializer_list<double> values, DType dtype = DType::f32);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  DType dtype() const { return dtype_; }

  std::span<double> data() & { return data_; }
  std::span<const double> data() const& { return data_; }
  // A span into a temporary would dangle.
  std::span<const double> data() && = delete;
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const double& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const double& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Same data, new shape; sizes must agree.
  Tensor reshaped(Shape shape) const;
  Tensor as_dtype(DType dtype) const;

  // Rounds every entry to the storage precision.
  Tensor& round_to_dtype();
  bool all_finite() const;

  void fill(double value);

 private:
  Shape shape_;
  std::vector<double> data_;
  DType dtype_ = DType::f32;
};

double round_to(DType dtype, double value);

// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace painformer
