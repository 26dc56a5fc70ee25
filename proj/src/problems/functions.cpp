#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include <Eigen/Dense>

#include "families.hpp"
#include "lopt/random.hpp"

namespace lopt::detail {

namespace {

using ad::Tape;
using ad::Var;

constexpr double kPi = std::numbers::pi;

// A single parameter vector with a closed-form loss. When a minimizer is
// supplied, the loss is shifted so that it evaluates to exactly zero there.
class VectorFunction : public Problem {
 public:
  VectorFunction(std::string name, std::int64_t dim, std::vector<std::pair<double, double>> init_box)
      : name_(std::move(name)), dim_(dim), init_box_(std::move(init_box)) {}

  std::string name() const override { return name_; }
  std::vector<Shape> param_shapes() const override { return {Shape{dim_}}; }

  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, {0x1417}));
    NdArray x(Shape{dim_});
    for (std::int64_t i = 0; i < dim_; ++i) {
      const auto& [lo, hi] = init_box_[static_cast<std::size_t>(std::min<std::int64_t>(i, std::ssize(init_box_) - 1))];
      x[static_cast<std::size_t>(i)] = uniform(rng, lo, hi);
    }
    return {x};
  }

  std::optional<double> global_min() const override {
    if (zero_min_) return 0.0;
    return std::nullopt;
  }
  std::optional<std::vector<NdArray>> minimizer() const override {
    if (!minimizer_) return std::nullopt;
    return std::vector<NdArray>{*minimizer_};
  }

 protected:
  virtual Var raw(Tape& tape, const Var& x) const = 0;

  Var loss_impl(Tape& tape, std::span<const Var> params, const Batch*) const override {
    const Var v = raw(tape, params[0]);
    return offset_ != 0.0 ? v - offset_ : v;
  }

  // Called at the end of the derived constructor.
  void set_minimizer(std::vector<double> x) {
    minimizer_ = NdArray::vector(std::move(x));
    zero_min_ = true;
    Tape tape;
    offset_ = raw(tape, tape.constant(*minimizer_)).item();
  }
  // Minimum value zero approached only at infinity.
  void set_zero_infimum() { zero_min_ = true; }

  std::int64_t dim() const { return dim_; }

 private:
  std::string name_;
  std::int64_t dim_;
  std::vector<std::pair<double, double>> init_box_;
  std::optional<NdArray> minimizer_;
  bool zero_min_ = false;
  double offset_ = 0.0;
};

Var element(const Var& x, std::int64_t i) { return slice(x, 0, i, i + 1); }

class Rosenbrock final : public VectorFunction {
 public:
  explicit Rosenbrock(std::int64_t dim) : VectorFunction("rosenbrock", dim, {{-2.0, 2.0}}) {
    set_minimizer(std::vector<double>(static_cast<std::size_t>(dim), 1.0));
  }

 protected:
  Var raw(Tape&, const Var& x) const override {
    const Var a = slice(x, 0, 0, dim() - 1);
    const Var b = slice(x, 0, 1, dim());
    return sum(square(1.0 - a)) + sum(square(b - square(a))) * 100.0;
  }
};

class Ackley final : public VectorFunction {
 public:
  explicit Ackley(std::int64_t dim) : VectorFunction("ackley", dim, {{-5.0, 5.0}}) {
    set_minimizer(std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  }

 protected:
  // The tiny constant under the root keeps the origin differentiable.
  Var raw(Tape&, const Var& x) const override {
    const Var r = sqrt(mean(square(x)) + 1e-12);
    const Var c = mean(cos(x * (2 * kPi)));
    return 20.0 + std::numbers::e - exp(r * -0.2) * 20.0 - exp(c);
  }
};

class Beale final : public VectorFunction {
 public:
  Beale() : VectorFunction("beale", 2, {{-2.0, 2.0}}) { set_minimizer({3.0, 0.5}); }

 protected:
  Var raw(Tape&, const Var& v) const override {
    const Var x = element(v, 0);
    const Var y = element(v, 1);
    const Var t1 = 1.5 - x + x * y;
    const Var t2 = 2.25 - x + x * square(y);
    const Var t3 = 2.625 - x + x * pow(y, 3.0);
    return sum(square(t1) + square(t2) + square(t3));
  }
};

class Booth final : public VectorFunction {
 public:
  Booth() : VectorFunction("booth", 2, {{-5.0, 5.0}}) { set_minimizer({1.0, 3.0}); }

 protected:
  Var raw(Tape&, const Var& v) const override {
    const Var x = element(v, 0);
    const Var y = element(v, 1);
    return sum(square(x + y * 2.0 - 7.0) + square(x * 2.0 + y - 5.0));
  }
};

// Root of 4x^3 - 32x + 5 near -2.9, the per-coordinate minimizer.
double styblinski_root() {
  double x = -2.9;
  for (int i = 0; i < 50; ++i) {
    const double f = 4 * x * x * x - 32 * x + 5;
    const double df = 12 * x * x - 32;
    const double step = f / df;
    x -= step;
    if (std::abs(step) < 1e-17) break;
  }
  return x;
}

class StyblinskiTang final : public VectorFunction {
 public:
  explicit StyblinskiTang(std::int64_t dim) : VectorFunction("styblinski_tang", dim, {{-5.0, 5.0}}) {
    set_minimizer(std::vector<double>(static_cast<std::size_t>(dim), styblinski_root()));
  }

 protected:
  Var raw(Tape&, const Var& x) const override {
    return sum(pow(x, 4.0) - square(x) * 16.0 + x * 5.0) * 0.5;
  }
};

class Matyas final : public VectorFunction {
 public:
  Matyas() : VectorFunction("matyas", 2, {{-10.0, 10.0}}) { set_minimizer({0.0, 0.0}); }

 protected:
  Var raw(Tape&, const Var& v) const override {
    const Var x = element(v, 0);
    const Var y = element(v, 1);
    return sum((square(x) + square(y)) * 0.26 - x * y * 0.48);
  }
};

class Branin final : public VectorFunction {
 public:
  Branin() : VectorFunction("branin", 2, {{-5.0, 10.0}, {0.0, 15.0}}) { set_minimizer({-kPi, 12.275}); }

 protected:
  Var raw(Tape&, const Var& v) const override {
    const double b = 5.1 / (4 * kPi * kPi);
    const double c = 5.0 / kPi;
    const double s = 10.0;
    const double t = 1.0 / (8 * kPi);
    const Var x = element(v, 0);
    const Var y = element(v, 1);
    return sum(square(y - square(x) * b + x * c - 6.0) + cos(x) * (s * (1 - t)) + s);
  }
};

constexpr double kMichalewiczM = 10.0;

double michalewicz_term(double x, int i) {
  return -std::sin(x) * std::pow(std::sin(i * x * x / kPi), 2 * kMichalewiczM);
}

// The function is separable, so its minimum over [0, pi]^d is the sum of
// one-dimensional minima: a dense grid followed by golden-section refinement.
double michalewicz_argmin(int i) {
  const int grid = 200000;
  double best_x = 0.0;
  double best_f = 0.0;
  for (int k = 0; k <= grid; ++k) {
    const double x = kPi * k / grid;
    const double f = michalewicz_term(x, i);
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }
  double lo = std::max(0.0, best_x - kPi / grid);
  double hi = std::min(kPi, best_x + kPi / grid);
  const double phi = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double a = hi - phi * (hi - lo);
    const double b = lo + phi * (hi - lo);
    if (michalewicz_term(a, i) < michalewicz_term(b, i)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return 0.5 * (lo + hi);
}

class Michalewicz final : public VectorFunction {
 public:
  explicit Michalewicz(std::int64_t dim) : VectorFunction("michalewicz", dim, {{0.0, kPi}}) {
    static const std::vector<double> argmins = [] {
      std::vector<double> v;
      for (int i = 1; i <= 10; ++i) v.push_back(michalewicz_argmin(i));
      return v;
    }();
    set_minimizer(std::vector<double>(argmins.begin(), argmins.begin() + dim));
  }

 protected:
  // Outside [0, pi]^d a quadratic wall keeps the function bounded below; the
  // periodic terms would otherwise reach lower values far from the box.
  Var raw(Tape& tape, const Var& x) const override {
    NdArray idx(Shape{dim()});
    for (std::int64_t i = 0; i < dim(); ++i) idx[static_cast<std::size_t>(i)] = static_cast<double>(i + 1) / kPi;
    const Var inner = sin(square(x) * tape.constant(idx));
    const Var terms = sin(x) * pow(inner, 2 * kMichalewiczM);
    const Var wall = sum(square(relu(x - kPi)) + square(relu(-x))) * 10.0;
    return wall - sum(terms);
  }
};

class LogSumExp final : public VectorFunction {
 public:
  static constexpr std::int64_t kPieces = 10;

  LogSumExp(std::int64_t dim, std::uint64_t seed) : VectorFunction("log_sum_exp", dim, {{-2.0, 2.0}}) {
    Rng rng(derive_seed(seed, {0x15e}));
    a_ = normal_array(Shape{kPieces, dim}, rng);
    // Centering the slopes puts the origin inside their convex hull, which
    // makes the function bounded below with a finite minimizer.
    for (std::int64_t j = 0; j < dim; ++j) {
      double m = 0.0;
      for (std::int64_t k = 0; k < kPieces; ++k) m += a_.at(k, j);
      m /= kPieces;
      for (std::int64_t k = 0; k < kPieces; ++k) a_.at(k, j) -= m;
    }
    b_ = normal_array(Shape{kPieces}, rng);
    set_minimizer(newton_minimizer());
  }

 protected:
  Var raw(Tape& tape, const Var& x) const override {
    const Var z = matmul(tape.constant(a_), x) + tape.constant(b_);
    // Shift by the current max for stability; the shift carries no gradient.
    const double m = max_reduce(z.value()).item();
    return log(sum(exp(z - m))) + m;
  }

 private:
  std::vector<double> newton_minimizer() const {
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd a(kPieces, d);
    Eigen::VectorXd b(kPieces);
    for (std::int64_t k = 0; k < kPieces; ++k) {
      b(k) = b_[static_cast<std::size_t>(k)];
      for (std::int64_t j = 0; j < dim(); ++j) a(k, j) = a_.at(k, j);
    }
    auto value = [&](const Eigen::VectorXd& x) {
      const Eigen::VectorXd z = a * x + b;
      const double m = z.maxCoeff();
      return m + std::log((z.array() - m).exp().sum());
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd z = a * x + b;
      Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
      p /= p.sum();
      const Eigen::VectorXd g = a.transpose() * p;
      if (g.norm() < 1e-14) break;
      const Eigen::MatrixXd h = a.transpose() * p.asDiagonal() * a - g * g.transpose();
      const Eigen::VectorXd step = h.ldlt().solve(g);
      double t = 1.0;
      const double f0 = value(x);
      while (t > 1e-12 && value(x - t * step) > f0 - 1e-4 * t * g.dot(step)) t *= 0.5;
      x -= t * step;
    }
    return {x.data(), x.data() + d};
  }

  NdArray a_;
  NdArray b_;
};

class OscillatingValley final : public VectorFunction {
 public:
  explicit OscillatingValley(std::int64_t dim) : VectorFunction("oscillating_valley", dim, {{-2.0, 2.0}}) {
    set_zero_infimum();
  }

 protected:
  Var raw(Tape&, const Var& x) const override {
    return sum((1.0 + sin(x * 3.0) * 0.5) * exp(x * -0.1)) + sum(softplus(-x)) * 10.0;
  }
};

class CoupledChain final : public VectorFunction {
 public:
  explicit CoupledChain(std::int64_t dim) : VectorFunction("coupled_chain", dim, {{-1.0, 1.0}}) {
    set_minimizer(std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  }

 protected:
  Var raw(Tape&, const Var& x) const override {
    const Var a = slice(x, 0, 0, dim() - 1);
    const Var b = slice(x, 0, 1, dim());
    return sum(square(element(x, 0))) + sum(square(b - a * 4.0));
  }
};

class MinMax final : public VectorFunction {
 public:
  explicit MinMax(std::int64_t dim) : VectorFunction("min_max", dim, {{-2.0, 2.0}}) {
    set_minimizer(std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  }

 protected:
  Var raw(Tape&, const Var& x) const override { return square(max_reduce(x)) + square(min_reduce(x)); }
};

}  // namespace

ProblemPtr make_rosenbrock(std::int64_t dim) { return std::make_shared<Rosenbrock>(dim); }
ProblemPtr make_ackley(std::int64_t dim) { return std::make_shared<Ackley>(dim); }
ProblemPtr make_beale() { return std::make_shared<Beale>(); }
ProblemPtr make_booth() { return std::make_shared<Booth>(); }
ProblemPtr make_styblinski_tang(std::int64_t dim) { return std::make_shared<StyblinskiTang>(dim); }
ProblemPtr make_matyas() { return std::make_shared<Matyas>(); }
ProblemPtr make_branin() { return std::make_shared<Branin>(); }
ProblemPtr make_michalewicz(std::int64_t dim) { return std::make_shared<Michalewicz>(dim); }
ProblemPtr make_log_sum_exp(std::int64_t dim, std::uint64_t seed) { return std::make_shared<LogSumExp>(dim, seed); }
ProblemPtr make_oscillating_valley(std::int64_t dim) { return std::make_shared<OscillatingValley>(dim); }
ProblemPtr make_coupled_chain(std::int64_t dim) { return std::make_shared<CoupledChain>(dim); }
ProblemPtr make_min_max(std::int64_t dim) { return std::make_shared<MinMax>(dim); }

}  // namespace lopt::detail
