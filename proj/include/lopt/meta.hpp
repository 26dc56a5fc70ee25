#pragma once

// Meta-training: unroll the learned optimizer on sampled problems, score the
// run with a log-loss objective, differentiate through the unroll (including
// the gradient computation), and update the meta-parameters with RMSProp.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lopt/optimizer.hpp"
#include "lopt/problems.hpp"

namespace lopt {

struct ScheduleParams {
  double scale_unrolls = 50.0;
  double offset_unrolls = 1.0;
  double scale_steps = 200.0;
  double offset_steps = 50.0;
};

struct UnrollSchedule {
  std::vector<int> steps_per_unroll;

  int num_unrolls() const { return static_cast<int>(steps_per_unroll.size()); }
  std::int64_t total_steps() const;
};

/// Counts are round(offset + Exp(scale)), never below max(1, offset).
UnrollSchedule sample_schedule(std::uint64_t seed, const ScheduleParams& params = {});

enum class MetaObjective { kLog, kLinear };

/// (1/N) * sum_{n=1..N} [log(l_n + eps) - log(l_0 + eps)] over l_0..l_N.
double meta_loss(std::span<const double> losses, double eps = 1e-8);
/// Linear variant: (1/N) * sum_{n=1..N} (l_n - l_0) / (l_0 + eps).
double linear_meta_loss(std::span<const double> losses, double eps = 1e-8);

struct UnrollOptions {
  MetaObjective objective = MetaObjective::kLog;
  double eps = 1e-8;
  /// Differentiate through the gradient computation; off drops the
  /// second-derivative terms (diagnostic).
  bool second_order = true;
  /// Problem init, init lr, batches and noise all derive from this seed.
  std::uint64_t seed = 0;
  /// Overrides the drawn initial learning rate.
  std::optional<double> init_lr{};
};

struct MetaLossRecord {
  std::string problem_name;
  UnrollSchedule schedule;
  /// Loss at every iterate reached, l(theta^0) .. l(theta^N).
  std::vector<double> losses;
  /// Objective of each completed or truncated unroll.
  std::vector<double> unroll_objectives;
  bool diverged = false;

  /// Sum of unroll objectives: the quantity whose gradient is returned.
  double objective() const;
  /// Mean of unroll objectives, used for logging.
  double meta_loss() const;
};

struct MetaGradient {
  std::vector<NdArray> grads;  // one per meta array, sum over unrolls
  MetaLossRecord record;
  /// False when no unroll produced a usable gradient.
  bool usable = true;
};

/// Runs `schedule` on `problem` from a fresh optimizer state. Gradient flow is
/// severed between unrolls; state values carry over. A divergent inner loss
/// truncates the run, keeping the gradient of the completed steps.
MetaGradient unroll_and_grad(const MetaParams& meta, const Problem& problem, const UnrollSchedule& schedule,
                             const UnrollOptions& options);

/// Objective only, with no tape variables (finite-difference oracle).
MetaLossRecord unroll_objective(const MetaParams& meta, const Problem& problem, const UnrollSchedule& schedule,
                                const UnrollOptions& options);

struct MetaOptState {
  std::vector<NdArray> mean_square;
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
  std::int64_t updates = 0;

  static MetaOptState zeros(const MetaParams& meta, double learning_rate, double decay);
};

/// RMSProp step followed by the readout-bias clamp.
void meta_update(MetaParams& meta, std::span<const NdArray> grads, MetaOptState& opt);

enum class WorkerMode { kSync, kAsync };

struct MetaTrainConfig {
  std::vector<Family> families;
  int workers = 1;
  std::int64_t iterations = 0;
  WorkerMode mode = WorkerMode::kSync;
  std::uint64_t seed = 0;
  double meta_lr = 1e-3;
  double meta_decay = 0.9;
  ScheduleParams schedule;
  UnrollOptions unroll;  // seed field ignored; per-problem seeds are derived
  double moving_average = 0.99;
  /// Record wall-clock milliseconds in the log (otherwise 0, keeping logs
  /// reproducible).
  bool timing = false;
};

struct MetaLogRow {
  std::int64_t meta_iteration = 0;
  std::string problem_name;
  double meta_loss = 0.0;
  double moving_avg_meta_loss = 0.0;
  double wall_ms = 0.0;
  bool diverged = false;
};

/// Everything needed to continue a run exactly.
struct MetaTrainState {
  MetaParams meta;
  MetaOptState opt;
  std::int64_t iteration = 0;
  double moving_avg = 0.0;
  bool has_moving_avg = false;
};

MetaTrainState start_meta_training(const MetaTrainConfig& config, const Architecture& arch);

/// Seed of worker `worker` in iteration `iteration`.
std::uint64_t worker_seed(std::uint64_t seed, std::int64_t iteration, int worker);

/// One synchronous iteration over explicit worker seeds: gradients of usable
/// workers are averaged in worker order and applied once. Returns one log row
/// per worker.
std::vector<MetaLogRow> sync_iteration(MetaTrainState& state, std::span<const std::uint64_t> seeds,
                                       const MetaTrainConfig& config);

using MetaLogSink = std::function<void(const MetaLogRow&)>;
/// Called after each completed iteration (sync) or update (async).
using IterationHook = std::function<void(const MetaTrainState&)>;

/// Trains until state.iteration == config.iterations. Sync mode runs the
/// workers of an iteration in parallel and is bit-reproducible; async mode
/// lets each worker apply its gradient as soon as it is ready, against the
/// snapshot it read, and is reproducible only with one worker.
void meta_train(MetaTrainState& state, const MetaTrainConfig& config, const MetaLogSink& log,
                const IterationHook& hook = {});

/// The problem a worker seed maps to.
ProblemPtr sample_problem(std::span<const Family> families, std::uint64_t seed);

}  // namespace lopt
