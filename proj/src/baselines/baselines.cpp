#include <cmath>
#include <limits>
#include <stdexcept>

#include "lopt/baselines.hpp"

namespace lopt {

const char* baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kAdam:
      return "adam";
    case BaselineKind::kRmsprop:
      return "rmsprop";
    case BaselineKind::kSgdMomentum:
      return "sgd_momentum";
  }
  return "?";
}

BaselineKind parse_baseline(const std::string& name) {
  for (BaselineKind k : {BaselineKind::kAdam, BaselineKind::kRmsprop, BaselineKind::kSgdMomentum}) {
    if (name == baseline_name(k)) return k;
  }
  throw std::invalid_argument("unknown baseline '" + name + "' (known: adam, rmsprop, sgd_momentum)");
}

BaselineConfig BaselineConfig::defaults(BaselineKind kind, double learning_rate) {
  BaselineConfig c;
  c.kind = kind;
  c.learning_rate = learning_rate;
  if (kind == BaselineKind::kRmsprop) c.epsilon = 1e-10;
  return c;
}

void BaselineConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  for (double d : {beta1, beta2, decay, momentum}) {
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("decay parameters must lie in [0, 1)");
  }
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
}

BaselineSlots init_slots(std::span<const NdArray> params) {
  BaselineSlots s;
  for (const NdArray& p : params) {
    s.first.emplace_back(p.shape());
    s.second.emplace_back(p.shape());
  }
  return s;
}

void baseline_step(const BaselineConfig& c, BaselineSlots& slots, std::vector<NdArray>& params,
                   std::span<const NdArray> grads) {
  ++slots.step;
  const double lr = c.learning_rate;
  const double t = static_cast<double>(slots.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const double* g = grads[i].data();
    double* m = slots.first[i].data();
    double* v = slots.second[i].data();
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      switch (c.kind) {
        case BaselineKind::kAdam:
          m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
          v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
          p[k] -= lr * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + c.epsilon);
          break;
        case BaselineKind::kRmsprop:
          v[k] = c.decay * v[k] + (1.0 - c.decay) * g[k] * g[k];
          p[k] -= lr * g[k] / (std::sqrt(v[k]) + c.epsilon);
          break;
        case BaselineKind::kSgdMomentum:
          m[k] = c.momentum * m[k] + g[k];
          p[k] -= lr * m[k];
          break;
      }
    }
  }
}

double RunCurve::final_loss() const {
  if (diverged || losses.empty()) return std::numeric_limits<double>::infinity();
  return losses.back();
}

RunCurve run_baseline(const Problem& problem, const BaselineConfig& config, std::vector<NdArray> theta,
                      std::int64_t steps, std::uint64_t seed) {
  config.validate();
  BaselineSlots slots = init_slots(theta);
  RunCurve curve;
  for (std::int64_t n = 0;; ++n) {
    const double clean = problem.loss_value(theta);
    if (is_divergent(clean)) {
      curve.diverged = true;
      return curve;
    }
    curve.losses.push_back(clean);
    if (n == steps) return curve;

    const std::optional<Batch> batch = draw_batch(problem, seed, n);
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const NdArray& p : theta) vars.push_back(tape.variable(p));
    const Batch* bp = batch ? &*batch : nullptr;
    std::vector<ad::Var> grads = ad::gradient(problem.loss(tape, vars, bp), vars);
    if (bp) grads = problem.transform_gradient(tape, std::move(grads), *bp);
    std::vector<NdArray> g;
    for (const ad::Var& v : grads) g.push_back(v.value());
    baseline_step(config, slots, theta, g);
  }
}

std::vector<SweepEntry> lr_sweep(const Problem& problem, const BaselineConfig& config_template,
                                 std::span<const double> learning_rates, const std::vector<NdArray>& theta0,
                                 std::int64_t steps, std::uint64_t seed) {
  if (learning_rates.empty()) throw std::invalid_argument("lr_sweep: empty learning-rate list");
  std::vector<SweepEntry> out;
  for (double lr : learning_rates) {
    BaselineConfig c = config_template;
    c.learning_rate = lr;
    out.push_back({lr, run_baseline(problem, c, theta0, steps, seed)});
  }
  return out;
}

std::vector<double> log_space(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi > 0.0)) throw std::invalid_argument("log_space: need count >= 1 and lo, hi > 0");
  if (count == 1) return {lo};
  std::vector<double> out;
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < count; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (count - 1)));
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace lopt
