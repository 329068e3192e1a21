// SPDX-License-Identifier: Apache-2.0
#include "spikemba/core/array.hpp"

#include <cmath>
#include <sstream>

#include "spikemba/core/errors.hpp"

namespace spikemba::core {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw DimensionError("array dimensions must be positive: " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto d : shape_)
    if (d == 0) throw DimensionError("array dimensions must be positive: " + shape_str(shape_));
  if (data_.size() != shape_size(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

Array Array::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Array({n}, std::move(v));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array({r, c}, std::move(data));
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  Array out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Array& Array::operator+=(const Array& other) {
  if (other.size() != size())
    throw DimensionError("in-place add " + shape_str(other.shape_) + " into " + shape_str(shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Array& Array::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

}  // namespace spikemba::core
