#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "families.hpp"
#include "lopt/random.hpp"

namespace lopt {

namespace {

using ad::Tape;
using ad::Var;

// Rows of `x` selected by `rows`.
NdArray gather_rows(const NdArray& x, std::span<const std::int64_t> rows) {
  const std::int64_t cols = x.shape().rank() == 2 ? x.shape()[1] : 1;
  NdArray out(x.shape().rank() == 2 ? Shape{std::ssize(rows), cols} : Shape{std::ssize(rows)});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(x.data() + rows[r] * cols, cols, out.data() + static_cast<std::int64_t>(r) * cols);
  }
  return out;
}

// `count` distinct indices out of [0, n), by partial Fisher-Yates.
std::vector<std::int64_t> sample_rows(std::int64_t n, std::int64_t count, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t j = uniform_int(rng, i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

class QuadraticBowl : public Problem {
 public:
  QuadraticBowl(std::int64_t dim, std::uint64_t seed) : dim_(dim) {
    Rng rng(derive_seed(seed, {0x9b0}));
    a_ = normal_array(Shape{dim, dim}, rng);
    target_ = normal_array(Shape{dim}, rng);
  }

  std::string name() const override { return "quadratic_bowl"; }
  std::vector<Shape> param_shapes() const override { return {Shape{dim_}}; }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0x1417}));
    return {normal_array(Shape{dim_}, rng)};
  }
  std::optional<double> global_min() const override { return 0.0; }
  std::optional<std::vector<NdArray>> minimizer() const override { return std::vector<NdArray>{target_}; }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch*) const override {
    const Var r = matmul(tape.constant(a_), params[0] - tape.constant(target_));
    return sum(square(r)) * 0.5;
  }

  std::int64_t dim_;
  NdArray a_;
  NdArray target_;
};

// Quadratic bowl whose gradient is perturbed by fresh Gaussian noise each
// step. The loss itself stays clean.
class NoisyFullbatch final : public QuadraticBowl {
 public:
  NoisyFullbatch(std::int64_t dim, double noise_std, std::uint64_t seed)
      : QuadraticBowl(dim, seed), noise_std_(noise_std) {}

  std::string name() const override { return "noisy_fullbatch"; }
  bool stochastic() const override { return true; }
  Batch sample_batch(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0x7015e}));
    Batch b;
    b.arrays.push_back(normal_array(Shape{dim_}, rng, noise_std_));
    return b;
  }
  std::vector<Var> transform_gradient(Tape& tape, std::vector<Var> grads, const Batch& batch) const override {
    grads[0] = grads[0] + tape.constant(batch.arrays[0]);
    return grads;
  }

 private:
  double noise_std_;
};

class MinibatchQuadratic final : public Problem {
 public:
  MinibatchQuadratic(std::int64_t dim, std::int64_t minibatch) : dim_(dim), minibatch_(minibatch) {}

  std::string name() const override { return "minibatch_quadratic"; }
  std::vector<Shape> param_shapes() const override { return {Shape{dim_}}; }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0x1417}));
    return {normal_array(Shape{dim_}, rng)};
  }
  bool stochastic() const override { return true; }
  Batch sample_batch(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0xba7c4}));
    Batch b;
    b.arrays.push_back(normal_array(Shape{minibatch_, dim_}, rng));
    return b;
  }
  std::optional<double> global_min() const override { return 0.0; }
  std::optional<std::vector<NdArray>> minimizer() const override {
    return std::vector<NdArray>{NdArray(Shape{dim_})};
  }

 protected:
  // Without a batch: the expectation over v ~ N(0, I), which is |theta|^2.
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    if (batch == nullptr) return sum(square(params[0]));
    return mean(square(matmul(tape.constant(batch->arrays[0]), params[0])));
  }

 private:
  std::int64_t dim_;
  std::int64_t minibatch_;
};

class LogisticRegression final : public Problem {
 public:
  LogisticRegression(std::int64_t dim, std::int64_t num_examples, std::int64_t minibatch, bool separable,
                     std::uint64_t seed)
      : dim_(dim), minibatch_(minibatch), separable_(separable) {
    Rng rng(derive_seed(seed, {0x10915}));
    NdArray w = normal_array(Shape{dim}, rng);
    double norm = 0.0;
    for (double v : w.values()) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : w.values()) v /= norm;

    x_ = NdArray(Shape{num_examples, dim});
    y_ = NdArray(Shape{num_examples});
    std::normal_distribution<double> normal;
    for (std::int64_t i = 0; i < num_examples; ++i) {
      double label;
      if (separable) {
        // Labels from a separating hyperplane through the origin, rejecting
        // points inside a margin band.
        double proj;
        do {
          proj = 0.0;
          for (std::int64_t j = 0; j < dim; ++j) {
            x_.at(i, j) = 2.0 * normal(rng);
            proj += x_.at(i, j) * w[static_cast<std::size_t>(j)];
          }
        } while (std::abs(proj) < 0.2);
        label = proj > 0 ? 1.0 : -1.0;
      } else {
        // Two overlapping Gaussian clusters.
        label = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        for (std::int64_t j = 0; j < dim; ++j) x_.at(i, j) = normal(rng) + 0.5 * label * w[static_cast<std::size_t>(j)];
      }
      y_[static_cast<std::size_t>(i)] = label;
    }
  }

  std::string name() const override { return "logistic_regression"; }
  std::vector<Shape> param_shapes() const override { return {Shape{dim_}, Shape{1}}; }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0x1417}));
    return {normal_array(Shape{dim_}, rng, 0.1), normal_array(Shape{1}, rng, 0.1)};
  }
  bool stochastic() const override { return minibatch_ < x_.shape()[0]; }
  Batch sample_batch(std::uint64_t seed) const override {
    if (!stochastic()) throw std::logic_error("logistic_regression: full-batch instance has no minibatches");
    Rng rng(derive_seed(seed, {0xba7c4}));
    const auto rows = sample_rows(x_.shape()[0], minibatch_, rng);
    Batch b;
    b.arrays.push_back(gather_rows(x_, rows));
    b.arrays.push_back(gather_rows(y_, rows));
    return b;
  }
  // Separable data: the loss approaches zero only as |w| grows without bound.
  std::optional<double> global_min() const override {
    if (separable_) return 0.0;
    return std::nullopt;
  }

  const NdArray& features() const { return x_; }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    const NdArray& x = batch != nullptr ? batch->arrays[0] : x_;
    const NdArray& y = batch != nullptr ? batch->arrays[1] : y_;
    const Var logits = matmul(tape.constant(x), params[0]) + reshape(params[1], Shape{});
    return mean(softplus(-(logits * tape.constant(y))));
  }

 private:
  std::int64_t dim_;
  std::int64_t minibatch_;
  bool separable_;
  NdArray x_;
  NdArray y_;
};

class Mlp final : public Problem {
 public:
  Mlp(const MlpConfig& config, NdArray features, std::vector<int> labels)
      : config_(config), x_(std::move(features)), y_(Shape{x_.shape()[0], config.classes}) {
    if (x_.shape().rank() != 2 || x_.shape()[1] != config.inputs) {
      throw ShapeError("mlp: features must be [n x " + std::to_string(config.inputs) + "], got " +
                       x_.shape().to_string());
    }
    if (std::ssize(labels) != x_.shape()[0]) throw std::invalid_argument("mlp: one label per feature row required");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= config.classes) throw std::invalid_argument("mlp: label out of range");
      y_.at(static_cast<std::int64_t>(i), labels[i]) = 1.0;
    }
  }

  std::string name() const override { return "mlp"; }
  std::vector<Shape> param_shapes() const override {
    return {Shape{config_.inputs, config_.hidden}, Shape{1, config_.hidden}, Shape{config_.hidden, config_.classes},
            Shape{1, config_.classes}};
  }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0x1417}));
    return {normal_array(Shape{config_.inputs, config_.hidden}, rng, 1.0 / std::sqrt(double(config_.inputs))),
            NdArray(Shape{1, config_.hidden}),
            normal_array(Shape{config_.hidden, config_.classes}, rng, 1.0 / std::sqrt(double(config_.hidden))),
            NdArray(Shape{1, config_.classes})};
  }
  bool stochastic() const override { return true; }
  Batch sample_batch(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0xba7c4}));
    const std::int64_t n = x_.shape()[0];
    std::vector<std::int64_t> rows(static_cast<std::size_t>(config_.minibatch));
    for (auto& r : rows) r = uniform_int(rng, 0, n - 1);
    Batch b;
    b.arrays.push_back(gather_rows(x_, rows));
    b.arrays.push_back(gather_rows(y_, rows));
    return b;
  }

 protected:
  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch* batch) const override {
    const NdArray& x = batch != nullptr ? batch->arrays[0] : x_;
    const NdArray& y = batch != nullptr ? batch->arrays[1] : y_;
    const std::int64_t rows = x.shape()[0];
    const Var h = relu(matmul(tape.constant(x), params[0]) + params[1]);
    const Var z = matmul(h, params[2]) + params[3];
    // log-softmax per row; a global shift is exact and keeps exp bounded.
    const double shift = max_reduce(z.value()).item();
    const Var zs = z - shift;
    const Var lse = log(sum_to(exp(zs), Shape{rows, 1}));
    return sum(tape.constant(y) * (zs - lse)) * (-1.0 / static_cast<double>(rows));
  }

 private:
  MlpConfig config_;
  NdArray x_;
  NdArray y_;
};

}  // namespace

namespace detail {

ProblemPtr make_quadratic_bowl(std::int64_t dim, std::uint64_t seed) {
  return std::make_shared<QuadraticBowl>(dim, seed);
}
ProblemPtr make_noisy_fullbatch(std::int64_t dim, double noise_std, std::uint64_t seed) {
  return std::make_shared<NoisyFullbatch>(dim, noise_std, seed);
}
ProblemPtr make_minibatch_quadratic(std::int64_t dim, std::int64_t minibatch) {
  return std::make_shared<MinibatchQuadratic>(dim, minibatch);
}
ProblemPtr make_logistic_regression(std::int64_t dim, std::int64_t num_examples, std::int64_t minibatch, bool separable,
                                    std::uint64_t seed) {
  return std::make_shared<LogisticRegression>(dim, num_examples, minibatch, separable, seed);
}

}  // namespace detail

ProblemPtr make_mlp_problem(const MlpConfig& config, NdArray features, std::vector<int> labels) {
  return std::make_shared<Mlp>(config, std::move(features), std::move(labels));
}

ProblemPtr make_mlp_problem(const MlpConfig& config) {
  // Labels from a random linear teacher, so the task is learnable.
  Rng rng(derive_seed(config.seed, {0x31f}));
  NdArray x = normal_array(Shape{config.num_examples, config.inputs}, rng);
  const NdArray teacher = normal_array(Shape{config.inputs, config.classes}, rng);
  const NdArray scores = matmul(x, teacher);
  std::vector<int> labels(static_cast<std::size_t>(config.num_examples));
  for (std::int64_t i = 0; i < config.num_examples; ++i) {
    int best = 0;
    for (int c = 1; c < config.classes; ++c) {
      if (scores.at(i, c) > scores.at(i, best)) best = c;
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return make_mlp_problem(config, std::move(x), std::move(labels));
}

}  // namespace lopt
