#include <stdexcept>

#include "lopt/problems.hpp"
#include "lopt/random.hpp"

namespace lopt {

ad::Var Problem::loss(ad::Tape& tape, std::span<const ad::Var> params, const Batch* batch) const {
  const auto shapes = param_shapes();
  if (params.size() != shapes.size()) {
    throw ShapeError(name() + ": expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      throw ShapeError(name() + ": parameter " + std::to_string(i) + " has shape " + params[i].shape().to_string() +
                       ", expected " + shapes[i].to_string());
    }
  }
  return loss_impl(tape, params, batch);
}

double Problem::loss_value(std::span<const NdArray> params, const Batch* batch) const {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const NdArray& p : params) vars.push_back(tape.constant(p));
  return loss(tape, vars, batch).item();
}

Batch Problem::sample_batch(std::uint64_t) const {
  throw std::logic_error(name() + ": deterministic full-batch problem has no minibatches");
}

std::optional<Batch> draw_batch(const Problem& problem, std::uint64_t seed, std::int64_t step) {
  if (!problem.stochastic()) return std::nullopt;
  return problem.sample_batch(derive_seed(seed, {0xba7c, static_cast<std::uint64_t>(step)}));
}

std::int64_t Problem::num_params() const {
  std::int64_t n = 0;
  for (const Shape& s : param_shapes()) n += s.numel();
  return n;
}

}  // namespace lopt
