#include "lopt/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace lopt {

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::span<const std::int64_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::int64_t> dims) {
  if (dims.size() > kMaxRank) {
    throw ShapeError("rank " + std::to_string(dims.size()) + " exceeds maximum of 4");
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] <= 0) {
      throw ShapeError("shape extents must be positive");
    }
    dims_[i] = dims[i];
  }
  rank_ = static_cast<std::uint8_t>(dims.size());
}

std::int64_t Shape::numel() const {
  std::int64_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const {
  if (rank_ != other.rank_) return false;
  for (std::size_t i = 0; i < rank_; ++i) {
    if (dims_[i] != other.dims_[i]) return false;
  }
  return true;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

NdArray::NdArray(Shape shape, double fill)
    : shape_(shape), data_(static_cast<std::size_t>(shape.numel()), fill) {}

NdArray::NdArray(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not fill shape " +
                     shape_.to_string());
  }
}

NdArray NdArray::vector(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return NdArray(Shape{n}, std::move(v));
}

NdArray NdArray::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> v) {
  return NdArray(Shape{rows, cols}, std::move(v));
}

double NdArray::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on array of shape " + shape_.to_string());
  }
  return data_[0];
}

bool NdArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const NdArray& a, const NdArray& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.to_string() + " and " + b.to_string());
}

template <class F>
NdArray map(const NdArray& a, F f) {
  NdArray out(a.shape());
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) y[i] = f(x[i]);
  return out;
}

template <class F>
NdArray zip(const char* op, const NdArray& a, const NdArray& b, F f) {
  if (a.shape() == b.shape()) {
    NdArray out(a.shape());
    const double* x = a.data();
    const double* z = b.data();
    double* y = out.data();
    for (std::size_t i = 0, n = a.size(); i < n; ++i) y[i] = f(x[i], z[i]);
    return out;
  }
  if (can_broadcast(b.shape(), a.shape())) return zip(op, a, broadcast_to(b, a.shape()), f);
  if (can_broadcast(a.shape(), b.shape())) return zip(op, broadcast_to(a, b.shape()), b, f);
  shape_error(op, a.shape(), b.shape());
}

// Splits `shape` around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.rank(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

bool can_broadcast(const Shape& from, const Shape& to) {
  if (from == to) return true;
  if (from.numel() == 1) return true;
  if (to.rank() != 2) return false;
  if (from.rank() == 1) return from[0] == to[1];
  if (from.rank() == 2) {
    return (from[0] == 1 && from[1] == to[1]) || (from[1] == 1 && from[0] == to[0]);
  }
  return false;
}

NdArray broadcast_to(const NdArray& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (!can_broadcast(a.shape(), shape)) shape_error("broadcast", a.shape(), shape);
  if (a.size() == 1) return NdArray(shape, a[0]);
  NdArray out(shape);
  const std::int64_t rows = shape[0];
  const std::int64_t cols = shape[1];
  const bool column = a.rank() == 2 && a.shape()[1] == 1 && cols != 1;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      out.at(r, c) = column ? a[static_cast<std::size_t>(r)] : a[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

NdArray sum_to(const NdArray& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (!can_broadcast(shape, a.shape())) shape_error("sum_to", a.shape(), shape);
  if (shape.numel() == 1) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return NdArray(shape, s);
  }
  NdArray out(shape);
  const std::int64_t rows = a.shape()[0];
  const std::int64_t cols = a.shape()[1];
  const bool column = shape.rank() == 2 && shape[1] == 1 && cols != 1;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(column ? r : c)] += a.at(r, c);
    }
  }
  return out;
}

NdArray operator+(const NdArray& a, const NdArray& b) {
  return zip("add", a, b, [](double x, double y) { return x + y; });
}
NdArray operator-(const NdArray& a, const NdArray& b) {
  return zip("sub", a, b, [](double x, double y) { return x - y; });
}
NdArray operator*(const NdArray& a, const NdArray& b) {
  return zip("mul", a, b, [](double x, double y) { return x * y; });
}
NdArray operator/(const NdArray& a, const NdArray& b) {
  return zip("div", a, b, [](double x, double y) { return x / y; });
}
NdArray operator-(const NdArray& a) {
  return map(a, [](double x) { return -x; });
}
NdArray operator+(const NdArray& a, double s) {
  return map(a, [s](double x) { return x + s; });
}
NdArray operator+(double s, const NdArray& a) { return a + s; }
NdArray operator-(const NdArray& a, double s) { return a + (-s); }
NdArray operator-(double s, const NdArray& a) {
  return map(a, [s](double x) { return s - x; });
}
NdArray operator*(const NdArray& a, double s) {
  return map(a, [s](double x) { return x * s; });
}
NdArray operator*(double s, const NdArray& a) { return a * s; }
NdArray operator/(const NdArray& a, double s) {
  return map(a, [s](double x) { return x / s; });
}

NdArray& operator+=(NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) shape_error("accumulate", a.shape(), b.shape());
  double* x = a.data();
  const double* y = b.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) x[i] += y[i];
  return a;
}

NdArray exp(const NdArray& a) {
  return map(a, [](double x) { return std::exp(x); });
}
NdArray log(const NdArray& a) {
  return map(a, [](double x) { return std::log(x); });
}
NdArray sqrt(const NdArray& a) {
  return map(a, [](double x) { return std::sqrt(x); });
}
NdArray sin(const NdArray& a) {
  return map(a, [](double x) { return std::sin(x); });
}
NdArray cos(const NdArray& a) {
  return map(a, [](double x) { return std::cos(x); });
}
NdArray tanh(const NdArray& a) {
  return map(a, [](double x) { return std::tanh(x); });
}
NdArray sigmoid(const NdArray& a) {
  return map(a, [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}
NdArray softplus(const NdArray& a) {
  return map(a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
}
NdArray abs(const NdArray& a) {
  return map(a, [](double x) { return std::abs(x); });
}
NdArray relu(const NdArray& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
NdArray pow(const NdArray& a, double p) {
  if (p == 2.0) return map(a, [](double x) { return x * x; });
  if (p == 1.0) return a;
  return map(a, [p](double x) { return std::pow(x, p); });
}
NdArray clamp_min(const NdArray& a, double floor) {
  return map(a, [floor](double x) { return x > floor ? x : floor; });
}

NdArray sign_of(const NdArray& a) {
  return map(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}
NdArray step_above(const NdArray& a, double threshold) {
  return map(a, [threshold](double x) { return x > threshold ? 1.0 : 0.0; });
}

NdArray matmul(const NdArray& a, const NdArray& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1) || a.shape()[1] != b.shape()[0]) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const std::int64_t m = a.shape()[0];
  const std::int64_t n = a.shape()[1];
  const std::int64_t k = b.rank() == 2 ? b.shape()[1] : 1;
  NdArray out(b.rank() == 2 ? Shape{m, k} : Shape{m});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    double* row = po + i * k;
    for (std::int64_t p = 0; p < n; ++p) {
      const double v = pa[i * n + p];
      const double* brow = pb + p * k;
      for (std::int64_t j = 0; j < k; ++j) row[j] += v * brow[j];
    }
  }
  return out;
}

NdArray transpose(const NdArray& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + a.shape().to_string());
  const std::int64_t r = a.shape()[0];
  const std::int64_t c = a.shape()[1];
  NdArray out(Shape{c, r});
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

NdArray reshape(const NdArray& a, const Shape& shape) {
  if (shape.numel() != a.shape().numel()) shape_error("reshape", a.shape(), shape);
  return NdArray(shape, a.buffer());
}

NdArray sum(const NdArray& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return NdArray::scalar(s);
}

NdArray mean(const NdArray& a) {
  return NdArray::scalar(sum(a)[0] / static_cast<double>(a.size()));
}

std::size_t argmax(const NdArray& a) {
  return static_cast<std::size_t>(std::max_element(a.values().begin(), a.values().end()) - a.values().begin());
}

std::size_t argmin(const NdArray& a) {
  return static_cast<std::size_t>(std::min_element(a.values().begin(), a.values().end()) - a.values().begin());
}

NdArray max_reduce(const NdArray& a) { return NdArray::scalar(a[argmax(a)]); }
NdArray min_reduce(const NdArray& a) { return NdArray::scalar(a[argmin(a)]); }

NdArray one_hot_like(const NdArray& a, std::size_t index) {
  NdArray out(a.shape());
  out[index] = 1.0;
  return out;
}

NdArray concat(const NdArray& a, const NdArray& b, int axis) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sa.rank() == sb.rank() && axis >= 0 && axis < static_cast<int>(sa.rank());
  for (std::size_t i = 0; ok && i < sa.rank(); ++i) {
    if (static_cast<int>(i) != axis && sa[i] != sb[i]) ok = false;
  }
  if (!ok) shape_error("concat", sa, sb);
  std::array<std::int64_t, Shape::kMaxRank> dims{};
  for (std::size_t i = 0; i < sa.rank(); ++i) dims[i] = sa[i];
  dims[axis] = sa[axis] + sb[axis];
  NdArray out(Shape(std::span<const std::int64_t>(dims.data(), sa.rank())));
  const AxisSplit xa = split_at(sa, axis);
  const AxisSplit xb = split_at(sb, axis);
  const std::int64_t ca = xa.extent * xa.inner;
  const std::int64_t cb = xb.extent * xb.inner;
  double* po = out.data();
  for (std::int64_t o = 0; o < xa.outer; ++o) {
    std::copy_n(a.data() + o * ca, ca, po);
    po += ca;
    std::copy_n(b.data() + o * cb, cb, po);
    po += cb;
  }
  return out;
}

NdArray slice(const NdArray& a, int axis, std::int64_t begin, std::int64_t end) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.rank()) || begin < 0 || end > s[axis] || begin >= end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " is invalid for shape " + s.to_string());
  }
  std::array<std::int64_t, Shape::kMaxRank> dims{};
  for (std::size_t i = 0; i < s.rank(); ++i) dims[i] = s[i];
  dims[axis] = end - begin;
  NdArray out(Shape(std::span<const std::int64_t>(dims.data(), s.rank())));
  const AxisSplit x = split_at(s, axis);
  const std::int64_t chunk = (end - begin) * x.inner;
  double* po = out.data();
  for (std::int64_t o = 0; o < x.outer; ++o) {
    std::copy_n(a.data() + (o * x.extent + begin) * x.inner, chunk, po);
    po += chunk;
  }
  return out;
}

}  // namespace lopt
