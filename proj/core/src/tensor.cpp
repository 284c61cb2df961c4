// SPDX-License-Identifier: Apache-2.0
#include "coslearn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "coslearn/error.hpp"

namespace coslearn {

std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_to_string(shape_));
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t w = last_dim();
  return std::span<double>(data_).subspan(r * w, w);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t w = last_dim();
  return std::span<const double>(data_).subspan(r * w, w);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on non-scalar tensor of shape " + shape_to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

double l2_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot of lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace coslearn
