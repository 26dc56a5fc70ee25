#include "lopt/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lopt/random.hpp"

namespace lopt {

namespace {

using Clock = std::chrono::steady_clock;

// Records the clean loss of every iterate; `step` advances by one iteration
// and returns false on divergence.
template <class Params, class Step, class LogLr>
Curve run_loop(const Problem& problem, const RunSettings& settings, Params params, Step step, LogLr log_lr) {
  if (settings.steps < 1) throw std::invalid_argument("steps must be at least 1");
  Curve curve;
  double elapsed = 0.0;
  for (std::int64_t n = 0;; ++n) {
    const double clean = problem.loss_value(params());
    if (is_divergent(clean)) {
      curve.status = RunStatus::kDiverged;
      return curve;
    }
    curve.points.push_back({n, clean, log_lr(), settings.timing ? elapsed : 0.0});
    if (n == settings.steps) break;
    const std::optional<Batch> batch = draw_batch(problem, settings.seed, n);
    const auto t0 = Clock::now();
    const bool ok = step(batch ? &*batch : nullptr);
    elapsed += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (!ok) {
      curve.status = RunStatus::kDiverged;
      return curve;
    }
  }
  const auto gmin = problem.global_min();
  if (gmin && curve.points.back().loss <= *gmin + settings.converge_tol) curve.status = RunStatus::kConverged;
  return curve;
}

}  // namespace

double Curve::final_loss() const {
  if (status == RunStatus::kDiverged || points.empty()) return std::numeric_limits<double>::infinity();
  return points.back().loss;
}

std::vector<NdArray> initial_params(const Problem& problem, std::uint64_t seed) {
  return problem.sample_init(derive_seed(seed, {0x1417}));
}

Curve run_learned(const MetaParams& meta, const Problem& problem, const RunSettings& settings) {
  const std::vector<NdArray> theta0 = initial_params(problem, settings.seed);
  LearnedOptimizer opt(meta, init_state(meta, theta0, {.seed = derive_seed(settings.seed, {0x0971}), .init_lr = settings.init_lr}));
  return run_loop(
      problem, settings, [&] { return opt.params(); },
      [&](const Batch* batch) {
        try {
          opt.step(problem, batch);
        } catch (const DivergenceError&) {
          return false;
        }
        return true;
      },
      [&] {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& t : opt.state().tensors) {
          for (double v : t.eta.values()) sum += v;
          count += t.eta.size();
        }
        return sum / static_cast<double>(count);
      });
}

Curve run_baseline_curve(const BaselineConfig& config, const Problem& problem, const RunSettings& settings) {
  config.validate();
  std::vector<NdArray> theta = initial_params(problem, settings.seed);
  BaselineSlots slots = init_slots(theta);
  return run_loop(
      problem, settings, [&] { return theta; },
      [&](const Batch* batch) {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const NdArray& p : theta) vars.push_back(tape.variable(p));
        std::vector<ad::Var> grads = ad::gradient(problem.loss(tape, vars, batch), vars);
        if (batch) grads = problem.transform_gradient(tape, std::move(grads), *batch);
        std::vector<NdArray> g;
        for (const ad::Var& v : grads) {
          if (!v.value().all_finite()) return false;
          g.push_back(v.value());
        }
        baseline_step(config, slots, theta, g);
        return true;
      },
      [&] { return std::log(config.learning_rate); });
}

CsvTable curve_table(const Curve& curve) {
  CsvTable t({"step", "loss", "log10_loss", "mean_log_lr", "wall_ms"});
  for (const CurvePoint& p : curve.points) {
    t.row().add(p.step).add(p.loss).add(std::log10(p.loss)).add(p.mean_log_lr).add(p.wall_ms);
  }
  return t;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace lopt
