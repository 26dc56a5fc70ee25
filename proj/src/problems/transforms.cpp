#include <cmath>
#include <stdexcept>

#include "lopt/problems.hpp"
#include "lopt/random.hpp"

namespace lopt {

namespace {

using ad::Tape;
using ad::Var;

// Base for wrappers around a single problem.
class Wrapper : public Problem {
 public:
  explicit Wrapper(ProblemPtr inner) : inner_(std::move(inner)) {}

  std::vector<Shape> param_shapes() const override { return inner_->param_shapes(); }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override { return inner_->sample_init(seed); }
  bool stochastic() const override { return inner_->stochastic(); }
  Batch sample_batch(std::uint64_t seed) const override {
    Batch b;
    b.children.push_back(inner_->sample_batch(seed));
    return b;
  }
  std::vector<Var> transform_gradient(Tape& tape, std::vector<Var> grads, const Batch& batch) const override {
    if (!inner_->stochastic()) return grads;
    return inner_->transform_gradient(tape, std::move(grads), batch.children[0]);
  }
  std::optional<double> global_min() const override { return inner_->global_min(); }
  std::optional<std::vector<NdArray>> minimizer() const override { return inner_->minimizer(); }

 protected:
  const Batch* inner_batch(const Batch* batch) const {
    return batch != nullptr && inner_->stochastic() ? &batch->children[0] : nullptr;
  }
  Var inner_loss(Tape& tape, std::span<const Var> params, const Batch* batch) const {
    return inner_->loss(tape, params, inner_batch(batch));
  }

  ProblemPtr inner_;
};

class SparseGradient final : public Wrapper {
 public:
  SparseGradient(ProblemPtr inner, double keep) : Wrapper(std::move(inner)), keep_(keep) {}

  std::string name() const override { return "sparse(" + inner_->name() + ")"; }
  bool stochastic() const override { return true; }
  Batch sample_batch(std::uint64_t seed) const override {
    Batch b;
    b.children.push_back(inner_->stochastic() ? inner_->sample_batch(derive_seed(seed, {1})) : Batch{});
    Rng rng(derive_seed(seed, {0x5a25e}));
    std::bernoulli_distribution keep(keep_);
    for (const Shape& s : param_shapes()) {
      NdArray mask(s);
      for (double& v : mask.values()) v = keep(rng) ? 1.0 : 0.0;
      b.arrays.push_back(std::move(mask));
    }
    return b;
  }
  std::vector<Var> transform_gradient(Tape& tape, std::vector<Var> grads, const Batch& batch) const override {
    grads = Wrapper::transform_gradient(tape, std::move(grads), batch);
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] = grads[i] * tape.constant(batch.arrays[i]);
    return grads;
  }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    return inner_loss(tape, params, batch);
  }

 private:
  double keep_;
};

// loss(u) = L(D * u), so u = theta / D.
class Rescale final : public Wrapper {
 public:
  Rescale(ProblemPtr inner, std::vector<NdArray> scales) : Wrapper(std::move(inner)), scales_(std::move(scales)) {
    const auto shapes = inner_->param_shapes();
    if (scales_.size() != shapes.size()) throw std::invalid_argument("rescale: one diagonal per parameter tensor required");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (scales_[i].shape() != shapes[i]) {
        throw ShapeError("rescale: diagonal " + scales_[i].shape().to_string() + " does not match parameter " +
                         shapes[i].to_string());
      }
    }
  }

  std::string name() const override { return "rescale(" + inner_->name() + ")"; }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override { return divide(inner_->sample_init(seed)); }
  std::optional<std::vector<NdArray>> minimizer() const override {
    auto m = inner_->minimizer();
    if (!m) return std::nullopt;
    return divide(std::move(*m));
  }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    std::vector<Var> theta;
    theta.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) theta.push_back(params[i] * tape.constant(scales_[i]));
    return inner_loss(tape, theta, batch);
  }

 private:
  std::vector<NdArray> divide(std::vector<NdArray> theta) const {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = theta[i] / scales_[i];
    return theta;
  }

  std::vector<NdArray> scales_;
};

// (L + delta)^p - delta^p. The tiny delta only matters for p < 1, where the
// derivative at L = 0 would otherwise be infinite.
class Monotonic final : public Wrapper {
 public:
  Monotonic(ProblemPtr inner, double power) : Wrapper(std::move(inner)), power_(power), delta_(power < 1 ? 1e-12 : 0.0) {}

  std::string name() const override { return "power(" + inner_->name() + ")"; }
  std::optional<double> global_min() const override {
    const auto m = inner_->global_min();
    if (!m) return std::nullopt;
    return std::pow(*m + delta_, power_) - std::pow(delta_, power_);
  }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    const Var l = inner_loss(tape, params, batch);
    if (delta_ == 0.0) return pow(l, power_);
    return pow(l + delta_, power_) - std::pow(delta_, power_);
  }

 private:
  double power_;
  double delta_;
};

class MultiTask final : public Problem {
 public:
  explicit MultiTask(std::vector<ProblemPtr> parts) : parts_(std::move(parts)) {
    for (const auto& p : parts_) {
      offsets_.push_back(total_);
      total_ += p->param_shapes().size();
    }
  }

  std::string name() const override {
    std::string n = "multi(";
    for (std::size_t i = 0; i < parts_.size(); ++i) n += (i ? "+" : "") + parts_[i]->name();
    return n + ")";
  }
  std::vector<Shape> param_shapes() const override {
    std::vector<Shape> out;
    for (const auto& p : parts_) {
      const auto s = p->param_shapes();
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    std::vector<NdArray> out;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      auto s = parts_[i]->sample_init(derive_seed(seed, {i}));
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }
  bool stochastic() const override {
    for (const auto& p : parts_) {
      if (p->stochastic()) return true;
    }
    return false;
  }
  Batch sample_batch(std::uint64_t seed) const override {
    Batch b;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      b.children.push_back(parts_[i]->stochastic() ? parts_[i]->sample_batch(derive_seed(seed, {i})) : Batch{});
    }
    return b;
  }
  std::vector<Var> transform_gradient(Tape& tape, std::vector<Var> grads, const Batch& batch) const override {
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      if (!parts_[i]->stochastic()) continue;
      const std::size_t n = parts_[i]->param_shapes().size();
      std::vector<Var> part(grads.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                            grads.begin() + static_cast<std::ptrdiff_t>(offsets_[i] + n));
      part = parts_[i]->transform_gradient(tape, std::move(part), batch.children[i]);
      std::copy(part.begin(), part.end(), grads.begin() + static_cast<std::ptrdiff_t>(offsets_[i]));
    }
    return grads;
  }
  std::optional<double> global_min() const override {
    double total = 0.0;
    for (const auto& p : parts_) {
      const auto m = p->global_min();
      if (!m) return std::nullopt;
      total += *m;
    }
    return total;
  }
  std::optional<std::vector<NdArray>> minimizer() const override {
    std::vector<NdArray> out;
    for (const auto& p : parts_) {
      auto m = p->minimizer();
      if (!m) return std::nullopt;
      out.insert(out.end(), m->begin(), m->end());
    }
    return out;
  }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    Var total;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      const std::size_t n = parts_[i]->param_shapes().size();
      const Batch* b = batch != nullptr && parts_[i]->stochastic() ? &batch->children[i] : nullptr;
      const Var l = parts_[i]->loss(tape, params.subspan(offsets_[i], n), b);
      total = total.valid() ? total + l : l;
    }
    return total;
  }

 private:
  std::vector<ProblemPtr> parts_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

}  // namespace

const char* transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::kSparseGradient: return "sparse";
    case TransformKind::kRescale: return "rescale";
    case TransformKind::kMonotonic: return "power";
    case TransformKind::kMultiTask: return "multi_task";
  }
  return "unknown";
}

ProblemPtr make_multi_task(std::vector<ProblemPtr> problems) {
  if (problems.empty()) throw std::invalid_argument("multi_task: at least one problem required");
  for (const auto& p : problems) {
    if (!p) throw std::invalid_argument("multi_task: null problem");
  }
  return std::make_shared<MultiTask>(std::move(problems));
}

ProblemPtr apply_transformation(ProblemPtr problem, const Transformation& t) {
  if (!problem) throw std::invalid_argument("apply_transformation: null problem");
  switch (t.kind) {
    case TransformKind::kSparseGradient:
      if (!(t.keep_fraction > 0.0 && t.keep_fraction <= 1.0)) {
        throw std::invalid_argument("sparse: keep fraction must lie in (0, 1]");
      }
      return std::make_shared<SparseGradient>(std::move(problem), t.keep_fraction);
    case TransformKind::kRescale: {
      std::vector<NdArray> scales = t.scales;
      if (scales.empty()) {
        Rng rng(derive_seed(t.seed, {0x5ca1e}));
        for (const Shape& s : problem->param_shapes()) {
          NdArray d(s);
          for (double& v : d.values()) v = log_uniform(rng, 1e-2, 1e2);
          scales.push_back(std::move(d));
        }
      }
      return std::make_shared<Rescale>(std::move(problem), std::move(scales));
    }
    case TransformKind::kMonotonic:
      if (!(t.power > 0.0)) throw std::invalid_argument("power: exponent must be positive");
      return std::make_shared<Monotonic>(std::move(problem), t.power);
    case TransformKind::kMultiTask: {
      std::vector<ProblemPtr> parts{std::move(problem)};
      parts.insert(parts.end(), t.tasks.begin(), t.tasks.end());
      return make_multi_task(std::move(parts));
    }
  }
  throw std::invalid_argument("apply_transformation: unknown kind");
}

}  // namespace lopt
