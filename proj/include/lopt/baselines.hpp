#pragma once

// Reference first-order optimizers and learning-rate sweeps.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lopt/problems.hpp"

namespace lopt {

enum class BaselineKind { kAdam, kRmsprop, kSgdMomentum };

const char* baseline_name(BaselineKind kind);
/// Throws std::invalid_argument listing the known kinds.
BaselineKind parse_baseline(const std::string& name);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;     // adam first moment
  double beta2 = 0.999;   // adam second moment
  double decay = 0.9;     // rmsprop mean square
  double momentum = 0.9;  // sgd
  double epsilon = 1e-8;

  /// Conventional defaults per kind (rmsprop uses epsilon 1e-10).
  static BaselineConfig defaults(BaselineKind kind, double learning_rate);
  /// Throws std::invalid_argument unless lr > 0 and decays lie in [0, 1).
  void validate() const;
};

/// Per-tensor accumulators, zero-initialized.
struct BaselineSlots {
  std::vector<NdArray> first;
  std::vector<NdArray> second;
  std::int64_t step = 0;
};

BaselineSlots init_slots(std::span<const NdArray> params);

/// In-place update of `params` given gradients `grads`.
void baseline_step(const BaselineConfig& config, BaselineSlots& slots, std::vector<NdArray>& params,
                   std::span<const NdArray> grads);

/// Clean losses at every iterate of a run: losses[n] = L(theta^n), n = 0..steps.
struct RunCurve {
  std::vector<double> losses;
  bool diverged = false;
  /// Final loss, +inf after divergence.
  double final_loss() const;
};

/// Runs `steps` baseline steps from theta0. Stochastic problems draw the
/// batch for step n from (seed, n). Stops at the first divergent loss.
RunCurve run_baseline(const Problem& problem, const BaselineConfig& config, std::vector<NdArray> theta0,
                      std::int64_t steps, std::uint64_t seed);

struct SweepEntry {
  double learning_rate = 0.0;
  RunCurve curve;
};

/// One run per learning rate from the same start and seed.
std::vector<SweepEntry> lr_sweep(const Problem& problem, const BaselineConfig& config_template,
                                 std::span<const double> learning_rates, const std::vector<NdArray>& theta0,
                                 std::int64_t steps, std::uint64_t seed);

/// `count` log-spaced values from lo to hi inclusive.
std::vector<double> log_space(double lo, double hi, int count);

}  // namespace lopt
