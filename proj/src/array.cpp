#include "dsf/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dsf::inline DSF_PREC {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Array::Array(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("array: " + std::to_string(data_.size()) +
                     " values do not fit shape " + shape_str(shape_));
  }
}

Array Array::reshaped(Shape shape) const {
  return Array(std::move(shape), data_);
}

void Array::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Array::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

void expect_shape(const Array& a, const Shape& shape, const char* what) {
  if (a.shape() != shape) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_str(shape) + ", got " +
                     shape_str(a.shape()));
  }
}

}  // namespace dsf::inline DSF_PREC
