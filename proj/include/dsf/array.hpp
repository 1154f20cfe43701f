#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsf/precision.hpp"

namespace dsf::inline DSF_PREC {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major real array. Rank-2 arrays are the common case; rows() and
/// cols() treat any array as [shape[0] x rest].
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, Real fill = Real{0});
  Array(Shape shape, std::vector<Real> values);

  static Array matrix(std::size_t rows, std::size_t cols, Real fill = Real{0}) {
    return Array({rows, cols}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept {
    return rows() == 0 ? 0 : data_.size() / rows();
  }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols() + c];
  }

  Array reshaped(Shape shape) const;
  void fill(Real value);
  bool all_finite() const noexcept;

  bool operator==(const Array& other) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// Throws ShapeError with `what` in the message unless `a` has exactly `shape`.
void expect_shape(const Array& a, const Shape& shape, const char* what);

}  // namespace dsf::inline DSF_PREC
