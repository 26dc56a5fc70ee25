#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "lopt/meta.hpp"
#include "lopt/random.hpp"

namespace lopt {

using ad::Var;

std::int64_t UnrollSchedule::total_steps() const {
  std::int64_t n = 0;
  for (int k : steps_per_unroll) n += k;
  return n;
}

UnrollSchedule sample_schedule(std::uint64_t seed, const ScheduleParams& p) {
  if (!(p.scale_unrolls > 0.0) || !(p.scale_steps > 0.0)) throw std::invalid_argument("schedule scales must be positive");
  Rng rng(derive_seed(seed, {0x5c4e}));
  auto draw = [&rng](double scale, double offset) {
    const double v = std::round(offset + std::exponential_distribution<double>(1.0 / scale)(rng));
    return static_cast<int>(std::max({v, std::round(offset), 1.0}));
  };
  UnrollSchedule s;
  const int unrolls = draw(p.scale_unrolls, p.offset_unrolls);
  for (int u = 0; u < unrolls; ++u) s.steps_per_unroll.push_back(draw(p.scale_steps, p.offset_steps));
  return s;
}

double meta_loss(std::span<const double> losses, double eps) {
  if (losses.size() < 2) throw std::invalid_argument("meta_loss needs at least two losses");
  const double base = std::log(losses[0] + eps);
  double total = 0.0;
  for (std::size_t n = 1; n < losses.size(); ++n) total += std::log(losses[n] + eps) - base;
  return total / static_cast<double>(losses.size() - 1);
}

double linear_meta_loss(std::span<const double> losses, double eps) {
  if (losses.size() < 2) throw std::invalid_argument("meta_loss needs at least two losses");
  double total = 0.0;
  for (std::size_t n = 1; n < losses.size(); ++n) total += (losses[n] - losses[0]) / (losses[0] + eps);
  return total / static_cast<double>(losses.size() - 1);
}

double MetaLossRecord::objective() const {
  double s = 0.0;
  for (double v : unroll_objectives) s += v;
  return s;
}

double MetaLossRecord::meta_loss() const {
  if (unroll_objectives.empty()) return std::nan("");
  return objective() / static_cast<double>(unroll_objectives.size());
}

namespace {

// Objective of one unroll over the differentiable terms l_1..l_N, with l_0 a
// constant (the start of the unroll carries no gradient).
Var unroll_objective_var(std::span<const Var> terms, double l0, const UnrollOptions& o) {
  const double inv_n = 1.0 / static_cast<double>(terms.size());
  Var total;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Var t = o.objective == MetaObjective::kLog ? log(terms[i] + o.eps) : terms[i];
    total = i == 0 ? t : total + t;
  }
  if (o.objective == MetaObjective::kLog) return total * inv_n - std::log(l0 + o.eps);
  return total * (inv_n / (l0 + o.eps)) - l0 / (l0 + o.eps);
}

bool all_finite(const std::vector<NdArray>& arrays) {
  for (const NdArray& a : arrays) {
    if (!a.all_finite()) return false;
  }
  return true;
}

MetaGradient run_unrolls(const MetaParams& meta, const Problem& problem, const UnrollSchedule& schedule,
                         const UnrollOptions& options, bool differentiate) {
  MetaGradient out;
  out.record.problem_name = problem.name();
  out.record.schedule = schedule;
  if (differentiate) {
    for (const NdArray& a : meta.arrays) out.grads.emplace_back(a.shape());
  }
  bool any_gradient = false;

  OptimizerState state = init_state(meta, problem.sample_init(derive_seed(options.seed, {0x1417})),
                                    {.seed = derive_seed(options.seed, {0x0971}), .init_lr = options.init_lr});
  std::int64_t step = 0;
  for (int u = 0; u < schedule.num_unrolls(); ++u) {
    ad::Tape tape;
    const std::vector<Var> mv = meta_on_tape(tape, meta, differentiate);
    TapeState ts = to_tape(tape, state);
    if (u == 0) bind_initial_hidden(meta.arch, mv, ts);

    std::vector<Var> terms;
    double l0 = 0.0;
    bool truncated = false;
    const StepOptions step_options{.create_graph = differentiate && options.second_order};
    const int steps = schedule.steps_per_unroll[static_cast<std::size_t>(u)];
    for (int k = 0; k < steps; ++k) {
      const std::optional<Batch> batch = draw_batch(problem, options.seed, step);
      Var l;
      try {
        l = optimizer_step(tape, meta.arch, mv, ts, problem, batch ? &*batch : nullptr, step_options);
      } catch (const DivergenceError&) {
        truncated = true;
        break;
      }
      if (is_divergent(l.item())) {
        truncated = true;
        break;
      }
      if (k == 0) {
        l0 = l.item();
        if (u == 0) out.record.losses.push_back(l0);
      } else {
        terms.push_back(l);
        out.record.losses.push_back(l.item());
      }
      ++step;
    }
    if (!truncated) {
      const std::optional<Batch> batch = draw_batch(problem, options.seed, step);
      const Var l = problem.loss(tape, current_params(ts), batch ? &*batch : nullptr);
      if (is_divergent(l.item())) {
        truncated = true;
      } else {
        terms.push_back(l);
        out.record.losses.push_back(l.item());
      }
    }

    if (!terms.empty()) {
      const Var obj = unroll_objective_var(terms, l0, options);
      if (std::isfinite(obj.item())) {
        if (differentiate) {
          std::vector<NdArray> g = ad::gradient_values(obj, mv);
          if (all_finite(g)) {
            for (std::size_t i = 0; i < g.size(); ++i) out.grads[i] += g[i];
            out.record.unroll_objectives.push_back(obj.item());
            any_gradient = true;
          } else {
            truncated = true;
          }
        } else {
          out.record.unroll_objectives.push_back(obj.item());
        }
      }
    }
    if (truncated) {
      out.record.diverged = true;
      break;
    }
    state = to_values(ts);
  }
  out.usable = differentiate ? any_gradient : !out.record.unroll_objectives.empty();
  return out;
}

}  // namespace

MetaGradient unroll_and_grad(const MetaParams& meta, const Problem& problem, const UnrollSchedule& schedule,
                             const UnrollOptions& options) {
  return run_unrolls(meta, problem, schedule, options, true);
}

MetaLossRecord unroll_objective(const MetaParams& meta, const Problem& problem, const UnrollSchedule& schedule,
                                const UnrollOptions& options) {
  return run_unrolls(meta, problem, schedule, options, false).record;
}

MetaOptState MetaOptState::zeros(const MetaParams& meta, double learning_rate, double decay) {
  MetaOptState s;
  for (const NdArray& a : meta.arrays) s.mean_square.emplace_back(a.shape());
  s.learning_rate = learning_rate;
  s.decay = decay;
  return s;
}

void meta_update(MetaParams& meta, std::span<const NdArray> grads, MetaOptState& opt) {
  if (grads.size() != meta.arrays.size() || opt.mean_square.size() != meta.arrays.size()) {
    throw std::invalid_argument("meta_update: array count mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != meta.arrays[i].shape()) throw ShapeError("meta_update: gradient shape mismatch");
    double* w = meta.arrays[i].data();
    double* v = opt.mean_square[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      v[k] = opt.decay * v[k] + (1.0 - opt.decay) * g[k] * g[k];
      w[k] -= opt.learning_rate * g[k] / (std::sqrt(v[k]) + opt.epsilon);
    }
  }
  ++opt.updates;
  meta.clamp();
}

std::uint64_t worker_seed(std::uint64_t seed, std::int64_t iteration, int worker) {
  return derive_seed(seed, {0x3e7a17, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(worker)});
}

ProblemPtr sample_problem(std::span<const Family> families, std::uint64_t seed) {
  return instantiate(sample_corpus_spec(families, seed));
}

MetaTrainState start_meta_training(const MetaTrainConfig& config, const Architecture& arch) {
  MetaTrainState s;
  s.meta = MetaParams::initialize(arch, derive_seed(config.seed, {0x1a17}));
  s.opt = MetaOptState::zeros(s.meta, config.meta_lr, config.meta_decay);
  return s;
}

namespace {

struct WorkerResult {
  MetaGradient gradient;
  double wall_ms = 0.0;
};

WorkerResult run_worker(const MetaParams& meta, std::uint64_t seed, const MetaTrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemPtr problem = sample_problem(config.families, derive_seed(seed, {0x9b}));
  const UnrollSchedule schedule = sample_schedule(derive_seed(seed, {0x5c}), config.schedule);
  UnrollOptions options = config.unroll;
  options.seed = derive_seed(seed, {0x0e});
  WorkerResult r{unroll_and_grad(meta, *problem, schedule, options), 0.0};
  if (config.timing) r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

MetaLogRow make_row(MetaTrainState& state, std::int64_t iteration, const WorkerResult& r, double coefficient) {
  MetaLogRow row;
  row.meta_iteration = iteration;
  row.problem_name = r.gradient.record.problem_name;
  row.meta_loss = r.gradient.record.meta_loss();
  row.diverged = r.gradient.record.diverged || !r.gradient.usable;
  row.wall_ms = r.wall_ms;
  if (r.gradient.usable && std::isfinite(row.meta_loss)) {
    if (!state.has_moving_avg) {
      state.moving_avg = row.meta_loss;
      state.has_moving_avg = true;
    } else {
      state.moving_avg = coefficient * state.moving_avg + (1.0 - coefficient) * row.meta_loss;
    }
  }
  row.moving_avg_meta_loss = state.has_moving_avg ? state.moving_avg : std::nan("");
  return row;
}

void validate(const MetaTrainConfig& config) {
  if (config.workers < 1) throw std::invalid_argument("meta_train: need at least one worker");
  if (config.families.empty()) throw std::invalid_argument("meta_train: empty corpus");
  if (config.iterations < 0) throw std::invalid_argument("meta_train: negative iteration count");
}

}  // namespace

std::vector<MetaLogRow> sync_iteration(MetaTrainState& state, std::span<const std::uint64_t> seeds,
                                       const MetaTrainConfig& config) {
  std::vector<WorkerResult> results(seeds.size());
  if (seeds.size() == 1) {
    results[0] = run_worker(state.meta, seeds[0], config);
  } else {
    std::vector<std::exception_ptr> errors(seeds.size());
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < seeds.size(); ++w) {
      threads.emplace_back([&, w] {
        try {
          results[w] = run_worker(state.meta, seeds[w], config);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (std::thread& t : threads) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<NdArray> sum;
  int usable = 0;
  for (const WorkerResult& r : results) {
    if (!r.gradient.usable) continue;
    if (usable++ == 0) {
      sum = r.gradient.grads;
    } else {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r.gradient.grads[i];
    }
  }
  if (usable > 0) {
    const double inv = 1.0 / static_cast<double>(usable);
    for (NdArray& g : sum) g = g * inv;
    meta_update(state.meta, sum, state.opt);
  }
  std::vector<MetaLogRow> rows;
  for (const WorkerResult& r : results) rows.push_back(make_row(state, state.iteration, r, config.moving_average));
  ++state.iteration;
  return rows;
}

void meta_train(MetaTrainState& state, const MetaTrainConfig& config, const MetaLogSink& log,
                const IterationHook& hook) {
  validate(config);
  if (config.mode == WorkerMode::kSync) {
    while (state.iteration < config.iterations) {
      std::vector<std::uint64_t> seeds;
      for (int w = 0; w < config.workers; ++w) seeds.push_back(worker_seed(config.seed, state.iteration, w));
      for (const MetaLogRow& row : sync_iteration(state, seeds, config)) {
        if (log) log(row);
      }
      if (hook) hook(state);
    }
    return;
  }

  std::mutex mu;
  std::int64_t next = state.iteration;
  std::exception_ptr failure;
  auto worker = [&] {
    try {
      for (;;) {
        std::int64_t it = 0;
        MetaParams snapshot;
        {
          const std::lock_guard<std::mutex> lock(mu);
          if (next >= config.iterations || failure) return;
          it = next++;
          snapshot = state.meta;
        }
        const WorkerResult r = run_worker(snapshot, worker_seed(config.seed, it, 0), config);
        const std::lock_guard<std::mutex> lock(mu);
        if (r.gradient.usable) meta_update(state.meta, r.gradient.grads, state.opt);
        const MetaLogRow row = make_row(state, it, r, config.moving_average);
        ++state.iteration;
        if (log) log(row);
        if (hook) hook(state);
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (int w = 0; w < config.workers; ++w) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace lopt
