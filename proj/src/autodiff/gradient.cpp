#include <algorithm>
#include <optional>

#include "lopt/autodiff.hpp"

namespace lopt::ad {

namespace {

// Adjoints as plain arrays.
struct EagerContext {
  using Value = NdArray;
  Tape& tape;
  const NdArray& in(std::int32_t id) const { return tape.value(id); }
  NdArray constant(NdArray v) const { return v; }
};

// Adjoints recorded on the tape so they can be differentiated again.
struct GraphContext {
  using Value = Var;
  Tape& tape;
  Var in(std::int32_t id) const { return Var(&tape, id); }
  Var constant(NdArray v) const { return tape.constant(std::move(v)); }
};

NdArray zeros_with_extent(const Shape& like, int axis, std::int64_t extent) {
  std::array<std::int64_t, Shape::kMaxRank> dims{};
  for (std::size_t i = 0; i < like.rank(); ++i) dims[i] = like[i];
  dims[axis] = extent;
  return NdArray(Shape(std::span<const std::int64_t>(dims.data(), like.rank())));
}

// One backward rule per primitive, written once for both contexts. `emit(k, g)`
// delivers the adjoint contribution for input k (0 = a, 1 = b).
template <class Ctx, class Want, class Emit>
void backward_rule(Ctx& ctx, OpCode op, const OpAttrs& at, std::int32_t a, std::int32_t b, std::int32_t self,
                   const typename Ctx::Value& gy, Want&& want, Emit&& emit) {
  const Tape& tape = ctx.tape;
  switch (op) {
    case OpCode::kLeaf:
      return;
    case OpCode::kAdd:
      if (want(0)) emit(0, gy);
      if (want(1)) emit(1, gy);
      return;
    case OpCode::kSub:
      if (want(0)) emit(0, gy);
      if (want(1)) emit(1, -gy);
      return;
    case OpCode::kMul:
      if (want(0)) emit(0, gy * ctx.in(b));
      if (want(1)) emit(1, gy * ctx.in(a));
      return;
    case OpCode::kDiv:
      if (want(0)) emit(0, gy / ctx.in(b));
      if (want(1)) emit(1, -(gy * ctx.in(self)) / ctx.in(b));
      return;
    case OpCode::kNeg:
      if (want(0)) emit(0, -gy);
      return;
    case OpCode::kAddScalar:
      if (want(0)) emit(0, gy);
      return;
    case OpCode::kMulScalar:
      if (want(0)) emit(0, gy * at.scalar);
      return;
    case OpCode::kPow:
      if (at.scalar == 2.0) {
        if (want(0)) emit(0, gy * ctx.in(a) * 2.0);
      } else {
        if (want(0)) emit(0, gy * pow(ctx.in(a), at.scalar - 1.0) * at.scalar);
      }
      return;
    case OpCode::kExp:
      if (want(0)) emit(0, gy * ctx.in(self));
      return;
    case OpCode::kLog:
      if (want(0)) emit(0, gy / ctx.in(a));
      return;
    case OpCode::kSqrt:
      if (want(0)) emit(0, (gy / ctx.in(self)) * 0.5);
      return;
    case OpCode::kSin:
      if (want(0)) emit(0, gy * cos(ctx.in(a)));
      return;
    case OpCode::kCos:
      if (want(0)) emit(0, -(gy * sin(ctx.in(a))));
      return;
    case OpCode::kTanh: {
      const auto y = ctx.in(self);
      if (want(0)) emit(0, gy * (1.0 - y * y));
      return;
    }
    case OpCode::kSigmoid: {
      const auto y = ctx.in(self);
      if (want(0)) emit(0, gy * (y * (1.0 - y)));
      return;
    }
    case OpCode::kSoftplus:
      if (want(0)) emit(0, gy * sigmoid(ctx.in(a)));
      return;
    case OpCode::kAbs:
      if (want(0)) emit(0, gy * ctx.constant(sign_of(tape.value(a))));
      return;
    case OpCode::kRelu:
      if (want(0)) emit(0, gy * ctx.constant(step_above(tape.value(a), 0.0)));
      return;
    case OpCode::kClampMin:
      if (want(0)) emit(0, gy * ctx.constant(step_above(tape.value(a), at.scalar)));
      return;
    case OpCode::kMatMul: {
      const Shape& sa = tape.value(a).shape();
      const Shape& sb = tape.value(b).shape();
      if (sb.rank() == 2) {
        if (want(0)) emit(0, matmul(gy, transpose(ctx.in(b))));
      } else {
        if (want(0)) emit(0, matmul(reshape(gy, Shape{sa[0], 1}), reshape(ctx.in(b), Shape{1, sb[0]})));
      }
      if (want(1)) emit(1, matmul(transpose(ctx.in(a)), gy));
      return;
    }
    case OpCode::kTranspose:
      if (want(0)) emit(0, transpose(gy));
      return;
    case OpCode::kReshape:
      if (want(0)) emit(0, reshape(gy, tape.value(a).shape()));
      return;
    case OpCode::kSum:
    case OpCode::kSumTo:
      if (want(0)) emit(0, broadcast_to(gy, tape.value(a).shape()));
      return;
    case OpCode::kMean: {
      const NdArray& x = tape.value(a);
      if (want(0)) emit(0, broadcast_to(gy * (1.0 / static_cast<double>(x.size())), x.shape()));
      return;
    }
    case OpCode::kMaxReduce:
    case OpCode::kMinReduce: {
      const NdArray& x = tape.value(a);
      const std::size_t k = op == OpCode::kMaxReduce ? argmax(x) : argmin(x);
      if (want(0)) emit(0, broadcast_to(gy, x.shape()) * ctx.constant(one_hot_like(x, k)));
      return;
    }
    case OpCode::kBroadcastTo:
      if (want(0)) emit(0, sum_to(gy, tape.value(a).shape()));
      return;
    case OpCode::kConcat: {
      const std::int64_t split = tape.value(a).shape()[at.axis];
      const std::int64_t total = tape.value(self).shape()[at.axis];
      if (want(0)) emit(0, slice(gy, at.axis, 0, split));
      if (want(1)) emit(1, slice(gy, at.axis, split, total));
      return;
    }
    case OpCode::kSlice: {
      const Shape& sx = tape.value(a).shape();
      auto g = gy;
      if (at.begin > 0) g = concat(ctx.constant(zeros_with_extent(sx, at.axis, at.begin)), g, at.axis);
      if (at.end < sx[at.axis]) g = concat(g, ctx.constant(zeros_with_extent(sx, at.axis, sx[at.axis] - at.end)), at.axis);
      if (want(0)) emit(0, g);
      return;
    }
  }
}

template <class Ctx>
std::vector<std::optional<typename Ctx::Value>> sweep(Ctx& ctx, const Var& output, std::span<const Var> wrt) {
  using Value = typename Ctx::Value;
  Tape& tape = ctx.tape;
  if (output.value().size() != 1) {
    throw GradientError("gradient: output must be a scalar, got shape " + output.shape().to_string());
  }
  std::int32_t lo = output.id();
  for (const Var& w : wrt) {
    if (w.tape() != &tape) throw GradientError("gradient: wrt variable belongs to a different tape");
    lo = std::min(lo, w.id());
  }
  const std::int32_t hi = output.id();
  std::vector<std::optional<Value>> adj(static_cast<std::size_t>(hi - lo + 1));
  std::vector<char> is_target(adj.size(), 0);
  for (const Var& w : wrt) is_target[static_cast<std::size_t>(w.id() - lo)] = 1;
  auto slot = [&](std::int32_t id) -> std::optional<Value>& { return adj[static_cast<std::size_t>(id - lo)]; };
  // Nodes that depend on some wrt target; only their adjoints are needed.
  std::vector<char> reaches(is_target);
  for (std::int32_t id = lo; id <= hi; ++id) {
    auto& r = reaches[static_cast<std::size_t>(id - lo)];
    if (r) continue;
    const Tape::Node& node = tape.node(id);
    r = (node.a >= lo && reaches[static_cast<std::size_t>(node.a - lo)]) ||
        (node.b >= lo && reaches[static_cast<std::size_t>(node.b - lo)]);
  }

  slot(hi) = ctx.constant(NdArray(output.shape(), 1.0));
  for (std::int32_t id = hi; id >= lo; --id) {
    if (!slot(id).has_value()) continue;
    const Tape::Node& node = tape.node(id);
    // wrt nodes are treated as independent inputs, even when recorded ops.
    if (node.op == OpCode::kLeaf || is_target[static_cast<std::size_t>(id - lo)]) continue;
    // Copy what the rule needs; the graph context appends to the tape.
    const OpCode op = node.op;
    const OpAttrs attrs = node.attrs;
    const std::int32_t a = node.a;
    const std::int32_t b = node.b;
    // Adjoints of non-target nodes are consumed exactly once.
    const Value gy = std::move(*slot(id));
    auto want = [&](int which) {
      const std::int32_t target = which == 0 ? a : b;
      return target >= lo && reaches[static_cast<std::size_t>(target - lo)] != 0;
    };
    backward_rule(ctx, op, attrs, a, b, id, gy, want, [&](int which, Value g) {
      auto& s = slot(which == 0 ? a : b);
      if (!s.has_value()) {
        s = std::move(g);
      } else if constexpr (std::is_same_v<Value, NdArray>) {
        *s += g;
      } else {
        s = *s + g;
      }
    });
  }

  std::vector<std::optional<Value>> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) result.push_back(slot(w.id()));
  return result;
}

}  // namespace

std::vector<Var> gradient(const Var& output, std::span<const Var> wrt, bool create_graph) {
  Tape& tape = *output.tape();
  std::vector<Var> out;
  out.reserve(wrt.size());
  if (create_graph) {
    GraphContext ctx{tape};
    auto grads = sweep(ctx, output, wrt);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      out.push_back(grads[i].has_value() ? *grads[i] : tape.constant(NdArray(wrt[i].shape())));
    }
    return out;
  }
  for (NdArray& g : gradient_values(output, wrt)) out.push_back(tape.constant(std::move(g)));
  return out;
}

std::vector<NdArray> gradient_values(const Var& output, std::span<const Var> wrt) {
  EagerContext ctx{*output.tape()};
  auto grads = sweep(ctx, output, wrt);
  std::vector<NdArray> out;
  out.reserve(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    out.push_back(grads[i].has_value() ? std::move(*grads[i]) : NdArray(wrt[i].shape()));
  }
  return out;
}

}  // namespace lopt::ad
