#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lopt {

/// Raised when operand shapes violate a primitive's shape rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fixed-capacity shape. Rank 0 is a scalar with one element.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::span<const std::int64_t> dims);

  std::size_t rank() const { return rank_; }
  std::int64_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::int64_t numel() const;
  std::span<const std::int64_t> dims() const { return {dims_.data(), rank_}; }

  bool operator==(const Shape& other) const;
  bool operator!=(const Shape& other) const { return !(*this == other); }

  std::string to_string() const;

 private:
  std::array<std::int64_t, kMaxRank> dims_{};
  std::uint8_t rank_ = 0;
};

/// Dense row-major buffer of doubles.
class NdArray {
 public:
  NdArray() : data_(1, 0.0) {}
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray scalar(double v) { return NdArray(Shape{}, v); }
  static NdArray vector(std::vector<double> v);
  static NdArray matrix(std::int64_t rows, std::int64_t cols, std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& buffer() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

  /// Value of a single-element array.
  double item() const;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

bool bitwise_equal(const NdArray& a, const NdArray& b);

// Eager primitives. The tape records the same set, and the backward rules are
// written once against both these functions and their recorded counterparts.

NdArray operator+(const NdArray& a, const NdArray& b);
NdArray operator-(const NdArray& a, const NdArray& b);
NdArray operator*(const NdArray& a, const NdArray& b);
NdArray operator/(const NdArray& a, const NdArray& b);
NdArray operator-(const NdArray& a);
NdArray operator+(const NdArray& a, double s);
NdArray operator+(double s, const NdArray& a);
NdArray operator-(const NdArray& a, double s);
NdArray operator-(double s, const NdArray& a);
NdArray operator*(const NdArray& a, double s);
NdArray operator*(double s, const NdArray& a);
NdArray operator/(const NdArray& a, double s);
NdArray& operator+=(NdArray& a, const NdArray& b);

NdArray exp(const NdArray& a);
NdArray log(const NdArray& a);
NdArray sqrt(const NdArray& a);
NdArray sin(const NdArray& a);
NdArray cos(const NdArray& a);
NdArray tanh(const NdArray& a);
NdArray sigmoid(const NdArray& a);
NdArray softplus(const NdArray& a);
NdArray abs(const NdArray& a);
NdArray relu(const NdArray& a);
NdArray pow(const NdArray& a, double p);
NdArray clamp_min(const NdArray& a, double floor);

NdArray matmul(const NdArray& a, const NdArray& b);
NdArray transpose(const NdArray& a);
NdArray reshape(const NdArray& a, const Shape& shape);

NdArray sum(const NdArray& a);
NdArray mean(const NdArray& a);
NdArray max_reduce(const NdArray& a);
NdArray min_reduce(const NdArray& a);
/// Reduces by summation onto `shape`; the inverse of broadcast_to.
NdArray sum_to(const NdArray& a, const Shape& shape);
NdArray broadcast_to(const NdArray& a, const Shape& shape);

NdArray concat(const NdArray& a, const NdArray& b, int axis);
NdArray slice(const NdArray& a, int axis, std::int64_t begin, std::int64_t end);

/// Masks and one-hot selectors used by piecewise-linear backward rules.
NdArray sign_of(const NdArray& a);
NdArray step_above(const NdArray& a, double threshold);
/// Index of the extreme element; ties go to the lowest index.
std::size_t argmax(const NdArray& a);
std::size_t argmin(const NdArray& a);
NdArray one_hot_like(const NdArray& a, std::size_t index);

/// True when `from` may be expanded to `to` (scalar, row, or column expansion).
bool can_broadcast(const Shape& from, const Shape& to);

}  // namespace lopt
