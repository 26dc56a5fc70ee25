#pragma once

// Tape-based reverse-mode differentiation over NdArray values.
//
// Every primitive is recorded as a node whose inputs are strictly earlier
// nodes. gradient() walks the tape backwards; with create_graph set, the
// adjoints are themselves recorded on the same tape, so a second reverse pass
// through them yields exact second-order terms (Hessian-vector products)
// without ever forming a Hessian.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lopt/ndarray.hpp"

namespace lopt::ad {

enum class OpCode : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddScalar,
  kMulScalar,
  kPow,
  kExp,
  kLog,
  kSqrt,
  kSin,
  kCos,
  kTanh,
  kSigmoid,
  kSoftplus,
  kAbs,
  kRelu,
  kClampMin,
  kMatMul,
  kTranspose,
  kReshape,
  kSum,
  kMean,
  kMaxReduce,
  kMinReduce,
  kSumTo,
  kBroadcastTo,
  kConcat,
  kSlice,
};

const char* op_name(OpCode op);

struct OpAttrs {
  double scalar = 0.0;
  int axis = 0;
  std::int64_t begin = 0;
  std::int64_t end = 0;
  Shape shape;
};

/// Forward rule shared by recording and replay.
NdArray evaluate(OpCode op, const OpAttrs& attrs, const NdArray* a, const NdArray* b);

class GradientError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

/// Handle to a recorded value.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that gradients never flow into.
  Var constant(NdArray value);
  /// Leaf that gradients flow into.
  Var variable(NdArray value);

  Var record(OpCode op, const Var& a, const Var* b = nullptr, OpAttrs attrs = {});

  const NdArray& value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Recomputes every non-leaf node from the leaves.
  std::vector<NdArray> replay() const;

  struct Node {
    OpCode op = OpCode::kLeaf;
    std::int32_t a = -1;
    std::int32_t b = -1;
    bool requires_grad = false;
    OpAttrs attrs;
    NdArray value;
  };
  const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  Var push(Node node);

  // deque keeps node references stable while the backward pass appends.
  std::deque<Node> nodes_;
};

// Recorded primitives. Binary elementwise ops expand scalar, row, or column
// operands with an explicit broadcast node.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);
Var operator/(double s, const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var abs(const Var& a);
Var relu(const Var& a);
Var pow(const Var& a, double p);
Var square(const Var& a);
Var clamp_min(const Var& a, double floor);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, const Shape& shape);

Var sum(const Var& a);
Var mean(const Var& a);
Var max_reduce(const Var& a);
Var min_reduce(const Var& a);
Var sum_to(const Var& a, const Shape& shape);
Var broadcast_to(const Var& a, const Shape& shape);

Var concat(const Var& a, const Var& b, int axis);
Var slice(const Var& a, int axis, std::int64_t begin, std::int64_t end);

/// d output / d wrt for a scalar output. Unreachable inputs get zeros. Each
/// wrt entry is held as an independent input: paths from the output that
/// reach it are not followed further down. With create_graph the result is
/// recorded and may itself be differentiated.
std::vector<Var> gradient(const Var& output, std::span<const Var> wrt, bool create_graph = false);

/// Same as gradient() without create_graph, returning plain values and
/// leaving the tape untouched.
std::vector<NdArray> gradient_values(const Var& output, std::span<const Var> wrt);

// Verification oracle: reverse-mode gradient versus central differences.

struct FiniteDiffOptions {
  double step = 1e-6;
  double tolerance = 1e-6;
  /// Step for coordinate i becomes step * max(1, |x_i|).
  bool scale_step = true;
  /// Relative errors use max(|analytic|, |numeric|, floor * max(1, |f(x)|))
  /// as denominator so that near-zero partials are compared absolutely at
  /// a level above finite-difference roundoff.
  double relative_floor = 1e-4;
};

struct CoordinateCheck {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
  bool smooth = true;
};

struct FiniteDiffReport {
  std::vector<CoordinateCheck> coordinates;
  double max_relative_error = 0.0;
  bool non_smooth = false;
  bool passed = false;
};

using ScalarFunction = std::function<Var(Tape&, const Var&)>;

/// Throws std::domain_error naming the coordinate when f is not finite near
/// the point. A kink (one-sided differences disagree at O(1) rather than
/// O(h)) marks the report non-smooth and failed.
FiniteDiffReport finite_diff_check(const ScalarFunction& f, const NdArray& point, FiniteDiffOptions options = {});

}  // namespace lopt::ad
