#include <string>

#include "lopt/autodiff.hpp"

namespace lopt::ad {

const char* op_name(OpCode op) {
  switch (op) {
    case OpCode::kLeaf: return "leaf";
    case OpCode::kAdd: return "add";
    case OpCode::kSub: return "sub";
    case OpCode::kMul: return "mul";
    case OpCode::kDiv: return "div";
    case OpCode::kNeg: return "neg";
    case OpCode::kAddScalar: return "add_scalar";
    case OpCode::kMulScalar: return "mul_scalar";
    case OpCode::kPow: return "pow";
    case OpCode::kExp: return "exp";
    case OpCode::kLog: return "log";
    case OpCode::kSqrt: return "sqrt";
    case OpCode::kSin: return "sin";
    case OpCode::kCos: return "cos";
    case OpCode::kTanh: return "tanh";
    case OpCode::kSigmoid: return "sigmoid";
    case OpCode::kSoftplus: return "softplus";
    case OpCode::kAbs: return "abs";
    case OpCode::kRelu: return "relu";
    case OpCode::kClampMin: return "clamp_min";
    case OpCode::kMatMul: return "matmul";
    case OpCode::kTranspose: return "transpose";
    case OpCode::kReshape: return "reshape";
    case OpCode::kSum: return "reduce_sum";
    case OpCode::kMean: return "reduce_mean";
    case OpCode::kMaxReduce: return "max_reduce";
    case OpCode::kMinReduce: return "min_reduce";
    case OpCode::kSumTo: return "sum_to";
    case OpCode::kBroadcastTo: return "broadcast";
    case OpCode::kConcat: return "concat";
    case OpCode::kSlice: return "slice";
  }
  return "unknown";
}

NdArray evaluate(OpCode op, const OpAttrs& at, const NdArray* a, const NdArray* b) {
  switch (op) {
    case OpCode::kLeaf: throw GradientError("leaf nodes have no forward rule");
    case OpCode::kAdd: return *a + *b;
    case OpCode::kSub: return *a - *b;
    case OpCode::kMul: return *a * *b;
    case OpCode::kDiv: return *a / *b;
    case OpCode::kNeg: return -*a;
    case OpCode::kAddScalar: return *a + at.scalar;
    case OpCode::kMulScalar: return *a * at.scalar;
    case OpCode::kPow: return pow(*a, at.scalar);
    case OpCode::kExp: return exp(*a);
    case OpCode::kLog: return log(*a);
    case OpCode::kSqrt: return sqrt(*a);
    case OpCode::kSin: return sin(*a);
    case OpCode::kCos: return cos(*a);
    case OpCode::kTanh: return tanh(*a);
    case OpCode::kSigmoid: return sigmoid(*a);
    case OpCode::kSoftplus: return softplus(*a);
    case OpCode::kAbs: return abs(*a);
    case OpCode::kRelu: return relu(*a);
    case OpCode::kClampMin: return clamp_min(*a, at.scalar);
    case OpCode::kMatMul: return matmul(*a, *b);
    case OpCode::kTranspose: return transpose(*a);
    case OpCode::kReshape: return reshape(*a, at.shape);
    case OpCode::kSum: return sum(*a);
    case OpCode::kMean: return mean(*a);
    case OpCode::kMaxReduce: return max_reduce(*a);
    case OpCode::kMinReduce: return min_reduce(*a);
    case OpCode::kSumTo: return sum_to(*a, at.shape);
    case OpCode::kBroadcastTo: return broadcast_to(*a, at.shape);
    case OpCode::kConcat: return concat(*a, *b, at.axis);
    case OpCode::kSlice: return slice(*a, at.axis, at.begin, at.end);
  }
  throw GradientError("unknown op");
}

const NdArray& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::constant(NdArray value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(NdArray value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(OpCode op, const Var& a, const Var* b, OpAttrs attrs) {
  if (a.tape() != this || (b != nullptr && b->tape() != this)) {
    throw GradientError(std::string(op_name(op)) + ": input belongs to a different tape");
  }
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b != nullptr ? b->id() : -1;
  n.requires_grad = requires_grad(a.id()) || (b != nullptr && requires_grad(b->id()));
  try {
    n.value = evaluate(op, attrs, &value(a.id()), b != nullptr ? &value(b->id()) : nullptr);
  } catch (const ShapeError& e) {
    // Name the primitive even when the eager kernel reported a generic rule.
    const std::string what = e.what();
    if (what.rfind(op_name(op), 0) == 0) throw;
    throw ShapeError(std::string(op_name(op)) + ": " + what);
  }
  n.attrs = std::move(attrs);
  return push(std::move(n));
}

std::vector<NdArray> Tape::replay() const {
  std::vector<NdArray> out;
  out.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.op == OpCode::kLeaf) {
      out.push_back(n.value);
      continue;
    }
    const NdArray* a = &out[static_cast<std::size_t>(n.a)];
    const NdArray* b = n.b >= 0 ? &out[static_cast<std::size_t>(n.b)] : nullptr;
    out.push_back(evaluate(n.op, n.attrs, a, b));
  }
  return out;
}

namespace {

Var unary(OpCode op, const Var& a, OpAttrs attrs = {}) { return a.tape()->record(op, a, nullptr, std::move(attrs)); }

Var binary(OpCode op, const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw GradientError(std::string(op_name(op)) + ": operands on different tapes");
  if (a.shape() == b.shape()) return a.tape()->record(op, a, &b);
  if (can_broadcast(b.shape(), a.shape())) {
    const Var bb = broadcast_to(b, a.shape());
    return a.tape()->record(op, a, &bb);
  }
  if (can_broadcast(a.shape(), b.shape())) {
    const Var aa = broadcast_to(a, b.shape());
    return a.tape()->record(op, aa, &b);
  }
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + a.shape().to_string() + " and " +
                   b.shape().to_string());
}

OpAttrs scalar_attr(double s) {
  OpAttrs at;
  at.scalar = s;
  return at;
}

OpAttrs shape_attr(const Shape& s) {
  OpAttrs at;
  at.shape = s;
  return at;
}

}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(OpCode::kAdd, a, b); }
Var operator-(const Var& a, const Var& b) { return binary(OpCode::kSub, a, b); }
Var operator*(const Var& a, const Var& b) { return binary(OpCode::kMul, a, b); }
Var operator/(const Var& a, const Var& b) { return binary(OpCode::kDiv, a, b); }
Var operator-(const Var& a) { return unary(OpCode::kNeg, a); }
Var operator+(const Var& a, double s) { return unary(OpCode::kAddScalar, a, scalar_attr(s)); }
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-a) + s; }
Var operator*(const Var& a, double s) { return unary(OpCode::kMulScalar, a, scalar_attr(s)); }
Var operator*(double s, const Var& a) { return a * s; }
Var operator/(const Var& a, double s) { return a * (1.0 / s); }
Var operator/(double s, const Var& a) { return pow(a, -1.0) * s; }

Var exp(const Var& a) { return unary(OpCode::kExp, a); }
Var log(const Var& a) { return unary(OpCode::kLog, a); }
Var sqrt(const Var& a) { return unary(OpCode::kSqrt, a); }
Var sin(const Var& a) { return unary(OpCode::kSin, a); }
Var cos(const Var& a) { return unary(OpCode::kCos, a); }
Var tanh(const Var& a) { return unary(OpCode::kTanh, a); }
Var sigmoid(const Var& a) { return unary(OpCode::kSigmoid, a); }
Var softplus(const Var& a) { return unary(OpCode::kSoftplus, a); }
Var abs(const Var& a) { return unary(OpCode::kAbs, a); }
Var relu(const Var& a) { return unary(OpCode::kRelu, a); }
Var pow(const Var& a, double p) { return unary(OpCode::kPow, a, scalar_attr(p)); }
Var square(const Var& a) { return pow(a, 2.0); }
Var clamp_min(const Var& a, double floor) { return unary(OpCode::kClampMin, a, scalar_attr(floor)); }

Var matmul(const Var& a, const Var& b) { return a.tape()->record(OpCode::kMatMul, a, &b); }
Var transpose(const Var& a) { return unary(OpCode::kTranspose, a); }
Var reshape(const Var& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  return unary(OpCode::kReshape, a, shape_attr(shape));
}

Var sum(const Var& a) { return unary(OpCode::kSum, a); }
Var mean(const Var& a) { return unary(OpCode::kMean, a); }
Var max_reduce(const Var& a) { return unary(OpCode::kMaxReduce, a); }
Var min_reduce(const Var& a) { return unary(OpCode::kMinReduce, a); }
Var sum_to(const Var& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  return unary(OpCode::kSumTo, a, shape_attr(shape));
}
Var broadcast_to(const Var& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  return unary(OpCode::kBroadcastTo, a, shape_attr(shape));
}

Var concat(const Var& a, const Var& b, int axis) {
  OpAttrs at;
  at.axis = axis;
  return a.tape()->record(OpCode::kConcat, a, &b, at);
}

Var slice(const Var& a, int axis, std::int64_t begin, std::int64_t end) {
  OpAttrs at;
  at.axis = axis;
  at.begin = begin;
  at.end = end;
  return unary(OpCode::kSlice, a, at);
}

}  // namespace lopt::ad
