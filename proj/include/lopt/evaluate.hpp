#pragma once

// Single optimization runs with per-step curves, shared by the command-line
// tools and the acceptance checks.

#include <cstdint>
#include <optional>
#include <vector>

#include "lopt/baselines.hpp"
#include "lopt/io.hpp"
#include "lopt/optimizer.hpp"

namespace lopt {

struct CurvePoint {
  std::int64_t step = 0;
  double loss = 0.0;
  double mean_log_lr = 0.0;  // natural log
  double wall_ms = 0.0;      // cumulative optimizer time, 0 unless timed
};

enum class RunStatus { kCompleted, kConverged, kDiverged };

struct Curve {
  std::vector<CurvePoint> points;
  RunStatus status = RunStatus::kCompleted;

  /// Clean loss of the last iterate; +inf after divergence.
  double final_loss() const;
};

struct RunSettings {
  std::int64_t steps = 1000;
  std::uint64_t seed = 0;
  /// Learned optimizer: fixes the initial learning rate instead of drawing it.
  std::optional<double> init_lr{};
  bool timing = false;
  /// A completed run converged when its final loss is within this of the
  /// problem's known minimum.
  double converge_tol = 1e-8;
};

/// Starting point of a run seeded with `seed`; identical for every optimizer.
std::vector<NdArray> initial_params(const Problem& problem, std::uint64_t seed);

Curve run_learned(const MetaParams& meta, const Problem& problem, const RunSettings& settings);
Curve run_baseline_curve(const BaselineConfig& config, const Problem& problem, const RunSettings& settings);

/// step, loss, log10_loss, mean_log_lr, wall_ms
CsvTable curve_table(const Curve& curve);

double median(std::vector<double> v);

}  // namespace lopt
