// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/tensor.hpp"

#include <cmath>
#include <sstream>

#include "bevkd/error.hpp"

namespace bevkd {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ValidationError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  require_matrix(*this, "rows()");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "cols()");
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ValidationError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ValidationError(std::string(what) + ": expected a matrix, got shape " +
                          shape_string(t.shape()));
  }
}

}  // namespace bevkd
