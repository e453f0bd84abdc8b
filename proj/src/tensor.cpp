#include "dalign/tensor.hpp"

#include <cmath>
#include <numeric>

#include "dalign/error.hpp"

namespace dalign {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw ShapeError("tensor of shape " + shape_to_string(shape_) + " cannot hold " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t d = n ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(n * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor(Shape{n, d}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw RankError("rows() needs a matrix, got " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw RankError("cols() needs a matrix, got " + shape_to_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (rank() != 0) throw RankError("item() needs a scalar, got " + shape_to_string(shape_));
  return values_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t d = cols();
  return std::span<const double>(values_).subspan(r * d, d);
}

std::vector<double> Tensor::row_copy(std::size_t r) const {
  auto s = row(r);
  return {s.begin(), s.end()};
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace dalign
