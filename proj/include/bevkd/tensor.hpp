// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bevkd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major array of doubles. Scalars have an empty shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix accessors; rank must be 2.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on) {
    requires_grad_ = on;
    return *this;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

// Throws ValidationError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
void require_matrix(const Tensor& t, const char* what);

}  // namespace bevkd
