// Acceptance checks A1-A9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails.
//
//   acceptance [--only A3,A4] [--cache DIR] [--evaluate CHECKPOINT]
//
// Meta-trained checkpoints are cached in DIR under a name derived from their
// full configuration, so a rerun with identical settings reuses them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>

#include "lopt/checkpoint.hpp"
#include "lopt/commands.hpp"
#include "lopt/evaluate.hpp"
#include "lopt/io.hpp"
#include "lopt/meta.hpp"
#include "lopt/random.hpp"

using namespace lopt;
using namespace lopt::ad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

fs::path g_cache = "acceptance_cache";

// Desk-scale meta-training shared by A3, A4 and A9.
const std::vector<Family> kCorpus = {Family::kQuadraticBowl,      Family::kRosenbrock, Family::kBooth,
                                     Family::kMatyas,             Family::kLogisticRegression,
                                     Family::kMinibatchQuadratic};

MetaTrainConfig desk_config(std::int64_t iterations) {
  MetaTrainConfig c;
  c.families = kCorpus;
  c.workers = 4;
  c.iterations = iterations;
  c.mode = WorkerMode::kSync;
  c.seed = 2017;
  c.meta_lr = 3e-4;
  c.schedule = {.scale_unrolls = 5.0, .offset_unrolls = 1.0, .scale_steps = 20.0, .offset_steps = 10.0};
  return c;
}

std::string fingerprint(const MetaTrainConfig& c, const Architecture& arch) {
  std::ostringstream s;
  s << "v1 families";
  for (Family f : c.families) s << ' ' << family_name(f);
  s << " w" << c.workers << " m" << c.iterations << " mode" << static_cast<int>(c.mode) << " seed" << c.seed << " lr"
    << format_double(c.meta_lr) << " decay" << format_double(c.meta_decay) << " sched "
    << format_double(c.schedule.scale_unrolls) << ' ' << format_double(c.schedule.offset_unrolls) << ' '
    << format_double(c.schedule.scale_steps) << ' ' << format_double(c.schedule.offset_steps) << " obj"
    << static_cast<int>(c.unroll.objective) << " eps" << format_double(c.unroll.eps) << " so" << c.unroll.second_order
    << " bits" << arch.flags.bits() << " s" << arch.flags.timescales << " k" << arch.k_param << '/' << arch.k_tensor
    << '/' << arch.k_global;
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(s.str())));
  return hex;
}

// Trains (resuming a partial run when one exists) or loads the cached result.
MetaParams meta_trained(const MetaTrainConfig& config, const Architecture& arch, const std::string& label) {
  fs::create_directories(g_cache);
  MetaTrainJob job;
  job.config = config;
  job.arch = arch;
  job.checkpoint = g_cache / (label + "_" + fingerprint(config, arch) + ".lopt");
  job.log = job.checkpoint.string() + ".log.csv";
  job.checkpoint_every = std::max<std::int64_t>(1, config.iterations / 50);
  if (fs::exists(job.checkpoint) && fs::exists(training_state_path(job.checkpoint))) {
    const MetaTrainState s = load_training(job.checkpoint);
    if (s.iteration == config.iterations) {
      std::cerr << label << ": cached " << job.checkpoint.string() << '\n';
      return s.meta;
    }
    job.resume = true;
    std::cerr << label << ": resuming at iteration " << s.iteration << '\n';
  }
  std::cerr << label << ": meta-training " << config.iterations << " iterations -> " << job.checkpoint.string() << '\n';
  return run_meta_train_job(job, &std::cerr).meta;
}

// A1 -------------------------------------------------------------------------

ScalarFunction flattened(const Problem& p, const Batch* batch) {
  return [&p, batch](Tape& t, const Var& x) {
    std::vector<Var> parts;
    std::int64_t off = 0;
    for (const Shape& s : p.param_shapes()) {
      parts.push_back(reshape(slice(x, 0, off, off + s.numel()), s));
      off += s.numel();
    }
    return p.loss(t, parts, batch);
  };
}

Outcome a1() {
  int checked = 0;
  int failed = 0;
  int kinks = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const ProblemSpec& tmpl : registry_list()) {
    const ProblemPtr p = instantiate(tmpl);
    for (std::uint64_t k = 0; k < 20; ++k) {
      const Batch b = p->stochastic() ? p->sample_batch(derive_seed(k, {0xa1})) : Batch{};
      std::vector<double> flat;
      for (const NdArray& v : p->sample_init(derive_seed(k, {0xa1, 1}))) flat.insert(flat.end(), v.values().begin(), v.values().end());
      FiniteDiffOptions opt;
      opt.tolerance = 1e-5;
      const auto r = finite_diff_check(flattened(*p, p->stochastic() ? &b : nullptr), NdArray::vector(flat), opt);
      ++checked;
      if (r.non_smooth) {
        ++kinks;
        continue;
      }
      if (!r.passed) ++failed;
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_name = p->name();
      }
    }
  }
  return {failed == 0 && kinks == 0,
          std::to_string(registry_list().size()) + " families x 20 points, " + std::to_string(failed) + " failures, " +
              std::to_string(kinks) + " kinks hit, worst relative error " + fmt(worst, 3) + " (" + worst_name + ")"};
}

// A2 -------------------------------------------------------------------------

Outcome a2() {
  Architecture arch;
  arch.k_param = 2;
  arch.k_tensor = 2;
  arch.k_global = 2;
  arch.flags.timescales = 1;
  MetaParams meta = MetaParams::initialize(arch, 21);
  Rng rng(22);
  for (std::size_t i = 0; i < meta.arrays.size(); ++i) {
    if (i != kGammaLogit) meta.arrays[i] = normal_array(meta.arrays[i].shape(), rng, 0.5);
  }
  meta.clamp();
  const ProblemPtr problem = instantiate({.family = Family::kQuadraticBowl, .dim = 2, .seed = 23});
  const UnrollSchedule schedule{{3}};
  UnrollOptions options{.seed = 24, .init_lr = 0.05};
  const MetaGradient full = unroll_and_grad(meta, *problem, schedule, options);

  // Fourth-order central differences of the objective.
  const double h = 1e-4;
  auto at = [&](std::size_t i, std::size_t k, double delta) {
    MetaParams m = meta;
    m.arrays[i][k] += delta;
    return unroll_objective(m, *problem, schedule, options).objective();
  };
  double worst = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < meta.arrays.size(); ++i) {
    for (std::size_t k = 0; k < meta.arrays[i].size(); ++k) {
      const double fd = (at(i, k, -2 * h) - 8 * at(i, k, -h) + 8 * at(i, k, h) - at(i, k, 2 * h)) / (12 * h);
      const double ad = full.grads[i][k];
      worst = std::max(worst, std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6}));
      ++count;
    }
  }
  options.second_order = false;
  const MetaGradient first = unroll_and_grad(meta, *problem, schedule, options);
  double diff = 0.0;
  for (std::size_t i = 0; i < full.grads.size(); ++i) {
    for (std::size_t k = 0; k < full.grads[i].size(); ++k) diff += std::pow(full.grads[i][k] - first.grads[i][k], 2);
  }
  diff = std::sqrt(diff);
  return {full.usable && worst <= 1e-4 && diff > 1e-8,
          std::to_string(count) + " meta-parameters, worst relative error " + fmt(worst, 3) +
              ", first-order difference norm " + fmt(diff, 3)};
}

// A3 -------------------------------------------------------------------------

constexpr std::int64_t kA3Iterations = 50000;
constexpr std::int64_t kEvalSteps = 1000;

std::vector<ProblemSpec> held_out_instances() {
  std::vector<ProblemSpec> out;
  for (std::size_t i = 0; i < 20; ++i) {
    ProblemSpec s;
    s.family = kCorpus[i % kCorpus.size()];
    s.seed = derive_seed(0x4e1d, {i});
    out.push_back(s);
  }
  return out;
}

// Median over three run seeds (initial point, batches, initial learning rate).
double median_final_log(std::uint64_t instance_seed, const std::function<Curve(const RunSettings&)>& run) {
  std::vector<double> v;
  for (std::uint64_t r = 0; r < 3; ++r) {
    RunSettings s;
    s.steps = kEvalSteps;
    s.seed = derive_seed(instance_seed, {0xe5a1, r});
    v.push_back(std::log10(run(s).final_loss()));
  }
  return median(v);
}

Outcome evaluate_a3(const MetaParams& meta) {
  int wins = 0;
  std::ostringstream per;
  const auto rms = BaselineConfig::defaults(BaselineKind::kRmsprop, 1e-2);
  const auto adam = BaselineConfig::defaults(BaselineKind::kAdam, 2e-3);
  const auto instances = held_out_instances();
  for (const ProblemSpec& spec : instances) {
    const ProblemPtr p = instantiate(spec);
    const double l = median_final_log(spec.seed, [&](const RunSettings& s) { return run_learned(meta, *p, s); });
    const double r = median_final_log(spec.seed, [&](const RunSettings& s) { return run_baseline_curve(rms, *p, s); });
    const double a = median_final_log(spec.seed, [&](const RunSettings& s) { return run_baseline_curve(adam, *p, s); });
    const bool win = l < r && l < a;
    wins += win;
    std::cerr << "  " << p->name() << ": learned " << fmt(l) << " rmsprop " << fmt(r) << " adam " << fmt(a)
              << (win ? "  win" : "") << '\n';
  }
  const double share = static_cast<double>(wins) / static_cast<double>(instances.size());
  return {share >= 0.6, "learned beats both baselines on " + std::to_string(wins) + "/" +
                            std::to_string(instances.size()) + " held-out instances (need 60%)"};
}

MetaParams a3_checkpoint() { return meta_trained(desk_config(kA3Iterations), Architecture{}, "a3"); }

Outcome a3() { return evaluate_a3(a3_checkpoint()); }

// A4 -------------------------------------------------------------------------

Outcome evaluate_a4(const MetaParams& meta) {
  const ProblemPtr p = instantiate({.family = Family::kQuadraticBowl, .dim = 10, .seed = 0x4a4});
  const std::vector<double> lrs = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
  auto spread = [](const std::vector<double>& finals) {
    const auto [lo, hi] = std::minmax_element(finals.begin(), finals.end());
    return std::log10(*hi / *lo);
  };
  std::vector<double> learned;
  std::vector<double> adam;
  RunSettings s;
  s.steps = kEvalSteps;
  s.seed = 0x4a5;
  for (double lr : lrs) {
    RunSettings ls = s;
    ls.init_lr = lr;
    learned.push_back(run_learned(meta, *p, ls).final_loss());
    adam.push_back(run_baseline_curve(BaselineConfig::defaults(BaselineKind::kAdam, lr), *p, s).final_loss());
    std::cerr << "  lr " << fmt(lr) << ": learned " << fmt(learned.back()) << " adam " << fmt(adam.back()) << '\n';
  }
  const double sl = spread(learned);
  const double sa = spread(adam);
  return {std::isfinite(sl) && sa - sl >= 2.0,
          "final-loss spread " + fmt(sl, 3) + " decades (learned) vs " + fmt(sa, 3) + " (adam), need 2 fewer"};
}

Outcome a4() { return evaluate_a4(a3_checkpoint()); }

// A5 -------------------------------------------------------------------------

// Sum of weighted squares with a single parameter tensor.
class WeightedSquares : public Problem {
 public:
  explicit WeightedSquares(std::vector<double> a) : a_(std::move(a)) {}
  std::string name() const override { return "weighted_squares"; }
  std::vector<Shape> param_shapes() const override { return {Shape{static_cast<std::int64_t>(a_.size())}}; }
  std::vector<NdArray> sample_init(std::uint64_t seed) const override {
    Rng rng(seed);
    return {normal_array(param_shapes()[0], rng)};
  }

 protected:
  Var loss_impl(Tape& t, std::span<const Var> p, const Batch*) const override {
    return sum(square(p[0]) * t.constant(NdArray::vector(a_)));
  }

 private:
  std::vector<double> a_;
};

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

MetaParams random_meta(const Architecture& arch, std::uint64_t seed) {
  MetaParams m = MetaParams::initialize(arch, seed);
  Rng rng(seed + 1);
  m[kReadoutW] = normal_array(m[kReadoutW].shape(), rng, 0.5);
  m[kReadoutB] = normal_array(m[kReadoutB].shape(), rng, 0.5);
  m.clamp();
  return m;
}

OptimizerState apply_once(const MetaParams& m, const OptimizerState& s, std::span<const NdArray> g) {
  Tape tape;
  const auto mv = meta_on_tape(tape, m, false);
  TapeState ts = to_tape(tape, s);
  std::vector<Var> gv;
  for (const NdArray& v : g) gv.push_back(tape.constant(v));
  apply_gradients(tape, m.arch, mv, ts, gv);
  return to_values(ts);
}

Outcome a5() {
  std::vector<std::string> failures;
  const Architecture arch;
  const MetaParams m = random_meta(arch, 51);

  // Scale invariance of the averaged inputs over a fixed gradient history.
  double worst_m = 0.0;
  for (double c : {1e-3, 7.3, 1e5}) {
    Rng rng(52);
    Tape tape;
    Var gbar[2] = {tape.constant(NdArray(Shape{6, 3})), tape.constant(NdArray(Shape{6, 3}))};
    Var lambda[2] = {tape.constant(NdArray(Shape{6, 3}, 1.0)), tape.constant(NdArray(Shape{6, 3}, 1.0))};
    for (int n = 0; n < 50; ++n) {
      const NdArray g = normal_array(Shape{6, 1}, rng);
      const Var bg = tape.constant(normal_array(Shape{6, 1}, rng, 2.0));
      const Var bl = tape.constant(normal_array(Shape{6, 1}, rng, 2.0));
      const Averages a = update_moving_averages(arch.flags, gbar[0], lambda[0], tape.constant(g), bg, bl, n == 0);
      const Averages b = update_moving_averages(arch.flags, gbar[1], lambda[1], tape.constant(g * c), bg, bl, n == 0);
      for (std::size_t i = 0; i < a.m.value().size(); ++i) {
        worst_m = std::max(worst_m, rel(a.m.value()[i], b.m.value()[i]));
        worst_m = std::max(worst_m, std::abs(a.gamma.value()[i] - b.gamma.value()[i]));
      }
      gbar[0] = a.gbar;
      gbar[1] = b.gbar;
      lambda[0] = a.lambda;
      lambda[1] = b.lambda;
    }
  }
  if (worst_m > 1e-12) failures.push_back("m/gamma scale invariance " + fmt(worst_m, 3));

  // Relative learning rates after steps driven by c * g.
  double worst_eta = 0.0;
  {
    const std::vector<NdArray> theta0 = {NdArray::vector({0.3, -1.0, 2.0, 0.5}), NdArray::vector({1.5, -0.2})};
    for (double c : {1e-3, 1e5}) {
      OptimizerState a = init_state(m, theta0, {.seed = 53});
      OptimizerState b = a;
      Rng rng(54);
      for (int n = 0; n < 5; ++n) {
        const std::vector<NdArray> g = {normal_array(Shape{4}, rng), normal_array(Shape{2}, rng)};
        const std::vector<NdArray> gc = {g[0] * c, g[1] * c};
        a = apply_once(m, a, g);
        b = apply_once(m, b, gc);
        double ma = 0.0;
        double mb = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < 2; ++t) {
          for (std::size_t i = 0; i < a.tensors[t].eta.size(); ++i) {
            ma += a.tensors[t].eta[i];
            mb += b.tensors[t].eta[i];
            ++count;
          }
        }
        ma /= static_cast<double>(count);
        mb /= static_cast<double>(count);
        double scale = 0.0;
        double err = 0.0;
        for (std::size_t t = 0; t < 2; ++t) {
          for (std::size_t i = 0; i < a.tensors[t].eta.size(); ++i) {
            scale = std::max(scale, std::abs(a.tensors[t].eta[i] - ma));
            err = std::max(err, std::abs((a.tensors[t].eta[i] - ma) - (b.tensors[t].eta[i] - mb)));
          }
        }
        worst_eta = std::max(worst_eta, err / scale);
      }
    }
  }
  if (worst_eta > 1e-12) failures.push_back("eta_rel scale invariance " + fmt(worst_eta, 3));

  // Step norm under uniform eta: zero the learning-rate channel so eta stays
  // at its uniform initial value.
  double worst_norm = 0.0;
  {
    MetaParams u = m;
    for (std::int64_t r = 0; r < u[kReadoutW].shape()[0]; ++r) u[kReadoutW].at(r, kDeltaEta) = 0.0;
    u[kReadoutB][kDeltaEta] = 0.0;
    for (double lr : {1e-5, 0.02, 3.0}) {
      const std::vector<NdArray> theta0 = {NdArray::vector({0.3, -1.0, 2.0, 0.5, 0.7}), NdArray::vector({1.5, -0.2, 4.0})};
      OptimizerState s = init_state(u, theta0, {.seed = 55, .init_lr = lr});
      Rng rng(56);
      for (int n = 0; n < 5; ++n) {
        const std::vector<NdArray> g = {normal_array(Shape{5}, rng), normal_array(Shape{3}, rng)};
        // Measured from theta = 0 so that theta' - theta carries no rounding.
        for (auto& t : s.tensors) std::fill(t.theta.values().begin(), t.theta.values().end(), 0.0);
        const OptimizerState next = apply_once(u, s, g);
        for (std::size_t t = 0; t < 2; ++t) {
          double sq = 0.0;
          for (std::size_t i = 0; i < next.tensors[t].theta.size(); ++i) {
            sq += std::pow(next.tensors[t].theta[i] - s.tensors[t].theta[i], 2);
          }
          const double n_t = static_cast<double>(next.tensors[t].theta.size());
          worst_norm = std::max(worst_norm, rel(std::sqrt(sq), std::exp(next.tensors[t].eta[0]) * n_t));
        }
        s = next;
      }
    }
  }
  if (worst_norm > 1e-12) failures.push_back("step norm identity " + fmt(worst_norm, 3));

  // Permutation equivariance of whole optimizer steps.
  double worst_perm = 0.0;
  {
    const std::vector<double> a = {0.5, 1.0, 2.0, 4.0, 8.0};
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> pa(a.size());
    const NdArray theta0 = NdArray::vector({1.0, -0.5, 0.25, 2.0, -1.5});
    NdArray ptheta0(theta0.shape());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      pa[i] = a[perm[i]];
      ptheta0[i] = theta0[perm[i]];
    }
    const WeightedSquares p(a);
    const WeightedSquares q(pa);
    LearnedOptimizer s(m, init_state(m, std::vector<NdArray>{theta0}, {.seed = 57, .init_lr = 1e-2}));
    LearnedOptimizer t(m, init_state(m, std::vector<NdArray>{ptheta0}, {.seed = 57, .init_lr = 1e-2}));
    for (int n = 0; n < 10; ++n) {
      s.step(p, nullptr);
      t.step(q, nullptr);
      for (std::size_t i = 0; i < perm.size(); ++i) {
        worst_perm = std::max(worst_perm, std::abs(t.state().tensors[0].theta[i] - s.state().tensors[0].theta[perm[i]]));
        worst_perm = std::max(worst_perm, std::abs(t.state().tensors[0].eta[i] - s.state().tensors[0].eta[perm[i]]));
      }
    }
  }
  if (worst_perm > 1e-12) failures.push_back("permutation equivariance " + fmt(worst_perm, 3));

  // Timescale ordering: after a sign flip from a settled average, longer
  // timescales move less.
  bool ordered = true;
  for (double beta : {-3.0, 0.0, 2.5}) {
    Tape tape;
    const Averages av = update_moving_averages(arch.flags, tape.constant(NdArray(Shape{1, 3}, 1.0)),
                                               tape.constant(NdArray(Shape{1, 3}, 1.0)),
                                               tape.constant(NdArray(Shape{1, 1}, -1.0)),
                                               tape.constant(NdArray(Shape{1, 1}, beta)),
                                               tape.constant(NdArray(Shape{1, 1}, beta)), false);
    const auto& gb = av.gbar.value();
    ordered = ordered && gb[0] < gb[1] && gb[1] < gb[2];
  }
  if (!ordered) failures.push_back("timescale ordering");

  std::string detail = "m/gamma " + fmt(worst_m, 2) + ", eta_rel " + fmt(worst_eta, 2) + ", step norm " +
                       fmt(worst_norm, 2) + ", permutation " + fmt(worst_perm, 2) + ", ordering " +
                       (ordered ? "ok" : "violated");
  return {failures.empty(), detail};
}

// A6 -------------------------------------------------------------------------

Outcome a6() {
  double unrolls = 0.0;
  double steps = 0.0;
  std::int64_t step_count = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const UnrollSchedule s = sample_schedule(derive_seed(0xa6, {static_cast<std::uint64_t>(i)}));
    unrolls += s.num_unrolls();
    for (int k : s.steps_per_unroll) {
      steps += k;
      ++step_count;
    }
  }
  unrolls /= n;
  steps /= static_cast<double>(step_count);
  const bool pass = std::abs(unrolls - 51.0) <= 0.05 * 51.0 && std::abs(steps - 250.0) <= 0.05 * 250.0;
  return {pass, "mean unrolls " + fmt(unrolls) + " (51 +- 5%), mean steps per unroll " + fmt(steps) + " (250 +- 5%)"};
}

// A7 -------------------------------------------------------------------------

Outcome a7() {
  const MetaParams meta = MetaParams::initialize(Architecture{}, 71);
  const std::vector<std::int64_t> batches = {32, 128, 512, 1024};
  MlpConfig base;
  base.seed = 72;
  const std::vector<BenchRow> rows = bench_overhead(meta, base, batches, 61, 5);
  double lo = INFINITY;
  double hi = 0.0;
  bool monotone = true;
  std::string table;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lo = std::min(lo, rows[i].optimizer_ms());
    hi = std::max(hi, rows[i].optimizer_ms());
    if (i > 0 && rows[i].ratio() > rows[i - 1].ratio()) monotone = false;
    table += " B=" + std::to_string(rows[i].batch) + ":" + fmt(rows[i].optimizer_ms(), 3) + "ms/" + fmt(rows[i].ratio(), 3) + "x";
  }
  const double spread = hi / lo - 1.0;
  return {spread <= 0.2 && monotone, "optimizer-only spread " + fmt(100 * spread, 3) + "% (max 20%), ratio " +
                                         (monotone ? "non-increasing" : "NOT monotone") + ";" + table};
}

// A8 -------------------------------------------------------------------------

Outcome a8() {
  const fs::path dir = fs::temp_directory_path() / ("lopt_acceptance_a8_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> failures;

  MetaParams m = MetaParams::initialize(Architecture{}, 81);
  Rng rng(82);
  for (NdArray& a : m.arrays) a = normal_array(a.shape(), rng);
  save_checkpoint(dir / "a.lopt", m);
  save_checkpoint(dir / "b.lopt", load_checkpoint(dir / "a.lopt"));
  if (read_file(dir / "a.lopt") != read_file(dir / "b.lopt")) failures.push_back("roundtrip not byte-identical");

  const std::string bytes = read_file(dir / "a.lopt");
  int accepted = 0;
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    std::string bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ (1 << (i % 8)));
    try {
      decode_checkpoint(bad);
      ++accepted;
    } catch (const CheckpointError&) {
    }
  }
  if (accepted) failures.push_back(std::to_string(accepted) + " corrupted files accepted");

  MetaTrainJob job;
  job.config = desk_config(6);
  job.config.workers = 1;
  job.config.schedule = {.scale_unrolls = 2.0, .offset_unrolls = 1.0, .scale_steps = 5.0, .offset_steps = 3.0};
  job.arch.k_param = 4;
  job.arch.k_tensor = 4;
  job.arch.k_global = 4;
  job.checkpoint = dir / "full.lopt";
  job.log = dir / "full.csv";
  run_meta_train_job(job);
  MetaTrainJob part = job;
  part.checkpoint = dir / "part.lopt";
  part.log = dir / "part.csv";
  part.config.iterations = 2;
  run_meta_train_job(part);
  part.config.iterations = 6;
  part.resume = true;
  run_meta_train_job(part);
  const bool same = read_file(job.checkpoint) == read_file(part.checkpoint) &&
                    read_file(training_state_path(job.checkpoint)) == read_file(training_state_path(part.checkpoint));
  if (!same) failures.push_back("resumed run differs");
  fs::remove_all(dir);
  std::string detail = failures.empty() ? "roundtrip byte-identical, corruption rejected, resume bit-exact" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

// A9 -------------------------------------------------------------------------

constexpr std::int64_t kA9Iterations = 5000;

Outcome a9() {
  AblationJob job;
  job.flagsets = {"default", "no_attention", "no_dynamic_input_scaling", "linear_objective"};
  job.config = desk_config(kA9Iterations);
  job.config.seed = 2018;
  for (std::size_t i = 0; i < 3; ++i) {
    ProblemSpec s;
    s.family = std::vector<Family>{Family::kQuadraticBowl, Family::kRosenbrock, Family::kLogisticRegression}[i];
    s.seed = derive_seed(0xa9, {i});
    job.problems.push_back(s);
  }
  job.eval_seeds = 5;
  job.eval_steps = kEvalSteps;
  // Pre-train through the cache so an interrupted run resumes.
  job.checkpoint_dir = g_cache / ("a9_" + fingerprint(job.config, job.arch));
  for (const std::string& f : job.flagsets) {
    const fs::path path = job.checkpoint_dir / (f + ".lopt");
    if (fs::exists(path)) continue;
    MetaTrainConfig c = job.config;
    Architecture a = job.arch;
    apply_flagset(f, a, c.unroll.objective);
    fs::create_directories(job.checkpoint_dir);
    save_checkpoint(path, meta_trained(c, a, "a9_" + f));
  }
  const std::vector<AblationRow> rows = run_ablation(job, &std::cerr);
  std::map<std::string, std::map<std::string, double>> by_problem;
  for (const AblationRow& r : rows) by_problem[r.problem][r.flagset] = r.median_log10_final_loss;
  int best = 0;
  std::string detail;
  for (const auto& [problem, scores] : by_problem) {
    const double d = scores.at("default");
    bool is_best = true;
    for (const auto& [flagset, v] : scores) {
      if (flagset != "default" && v <= d) is_best = false;
    }
    best += is_best;
    detail += " " + problem + ":";
    for (const std::string& f : job.flagsets) detail += " " + fmt(scores.at(f), 3);
  }
  return {best >= 2, "default best on " + std::to_string(best) + "/3 problems (need 2); median log10 losses " +
                         "[default, no_attention, no_dynamic_input_scaling, linear_objective]:" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only;
  std::string evaluate;
  std::string cache = g_cache.string();
  app.add_option("--only", only, "comma-separated criteria, e.g. A3,A4");
  app.add_option("--cache", cache, "directory for meta-trained checkpoints");
  app.add_option("--evaluate", evaluate, "run the A3 and A4 evaluations on this checkpoint instead");
  CLI11_PARSE(app, argc, argv);
  g_cache = cache;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}};
  std::set<std::string> selected;
  for (std::size_t s = 0; s < only.size();) {
    const std::size_t e = std::min(only.find(',', s), only.size());
    selected.insert(only.substr(s, e - s));
    s = e + 1;
  }

  bool all = true;
  auto report = [&](const std::string& name, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail << " [" << fmt(secs, 3) << " s]"
              << std::endl;
  };

  if (!evaluate.empty()) {
    const MetaParams meta = load_checkpoint(evaluate);
    report("A3", [&] { return evaluate_a3(meta); });
    report("A4", [&] { return evaluate_a4(meta); });
    return all ? 0 : 1;
  }
  for (const auto& [name, f] : criteria) {
    if (selected.empty() || selected.count(name)) report(name, f);
  }
  return all ? 0 : 1;
}
