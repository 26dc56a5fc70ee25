#pragma once

// Hierarchical recurrent optimizer.
//
// Three GRU levels share weights across the target problem: one Parameter
// cell per scalar parameter, one Tensor cell per parameter tensor, and one
// Global cell. Every step is recorded on a tape, so the same code serves plain
// optimization (values only) and meta-training (differentiating through many
// steps, including the gradient computation itself).

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lopt/autodiff.hpp"
#include "lopt/problems.hpp"

namespace lopt {

struct FeatureFlags {
  bool attention = true;
  bool multi_timescale = true;
  bool dynamic_input_scaling = true;
  bool relative_lr = true;
  bool shortcut = true;
  bool trainable_init = true;
  bool param_noise = false;
  bool prev_timescale = false;
  bool unnormalized_step = false;
  int timescales = 3;

  /// Number of averaging timescales actually in use.
  int active_timescales() const { return multi_timescale ? timescales : 1; }

  std::uint32_t bits() const;
  static FeatureFlags from_bits(std::uint32_t bits, int timescales);
  bool operator==(const FeatureFlags&) const = default;
};

struct Architecture {
  FeatureFlags flags;
  int k_param = 10;
  int k_tensor = 20;
  int k_global = 20;

  /// Parameter cell input: scaled averages, relative log magnitudes, relative lr.
  int input_width() const { return 2 * flags.active_timescales() + 1; }
  bool operator==(const Architecture&) const = default;
};

/// Readout channels.
enum Output : int { kDirTheta = 0, kDirPhi = 1, kDeltaEta = 2, kBetaG = 3, kBetaLambda = 4, kNumOutputs = 5 };

/// Position of each meta-parameter array; the order is stable and defines the
/// checkpoint layout.
enum MetaIndex : std::size_t {
  kParamWx,
  kParamWhRz,
  kParamWhH,
  kParamB,
  kParamFromTensor,
  kParamFromGlobal,
  kTensorWx,
  kTensorWhRz,
  kTensorWhH,
  kTensorB,
  kTensorFromGlobal,
  kGlobalWx,
  kGlobalWhRz,
  kGlobalWhH,
  kGlobalB,
  kReadoutW,
  kReadoutB,
  kShortcutP,
  kInitHParam,
  kInitHTensor,
  kInitHGlobal,
  kGammaLogit,
  kAttendOffset,
  kNumMetaArrays,
};

struct MetaParams {
  Architecture arch;
  std::vector<NdArray> arrays;

  /// Random GRU weights with std 0.1/sqrt(fan_in), zero readout, shortcut
  /// averaging the scaled gradients, gamma = 0.9, c = 0.
  static MetaParams initialize(const Architecture& arch, std::uint64_t seed);

  static const std::vector<std::string>& names();
  static std::vector<Shape> shapes(const Architecture& arch);

  const NdArray& operator[](std::size_t i) const { return arrays[i]; }
  NdArray& operator[](std::size_t i) { return arrays[i]; }

  /// Readout biases feeding the two directions are pinned to zero.
  void clamp();
};

template <class T>
struct TensorSlot {
  T theta;        // N x 1
  T phi;          // N x 1, attended parameters
  T h_param;      // N x K_P
  T gbar;         // N x S
  T lambda;       // N x S (N x (S+1) with the previous-timescale variant)
  T eta;          // N x 1
  T eta_bar;      // N x 1
  T beta_g;       // N x 1
  T beta_lambda;  // N x 1
  T h_tensor;     // 1 x K_T
};

template <class T>
struct BasicOptimizerState {
  std::vector<TensorSlot<T>> tensors;
  std::vector<Shape> shapes;  // problem shapes of theta
  T h_global;                 // 1 x K_G
  std::int64_t step = 0;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
};

using OptimizerState = BasicOptimizerState<NdArray>;
using TapeState = BasicOptimizerState<ad::Var>;

struct InitOptions {
  std::uint64_t seed = 0;
  /// Overrides the log-uniform [1e-6, 1e-2] draw.
  std::optional<double> init_lr{};
};

OptimizerState init_state(const MetaParams& meta, std::span<const NdArray> theta0, const InitOptions& options);

/// Places state values on a tape as constants (gradient flow severed).
TapeState to_tape(ad::Tape& tape, const OptimizerState& state);
OptimizerState to_values(const TapeState& state);
/// Meta-parameters as tape leaves; variables when `trainable`.
std::vector<ad::Var> meta_on_tape(ad::Tape& tape, const MetaParams& meta, bool trainable);

/// Replaces the hidden states of a fresh state with the learned initial
/// values held in `meta`, so they receive meta-gradients. No-op when the
/// trainable-init feature is off.
void bind_initial_hidden(const Architecture& arch, std::span<const ad::Var> meta, TapeState& state);

std::vector<NdArray> current_params(const OptimizerState& state);
std::vector<ad::Var> current_params(const TapeState& state);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t step, double loss);
  std::int64_t step() const { return step_; }
  double loss() const { return loss_; }

 private:
  std::int64_t step_;
  double loss_;
};

// Building blocks, exposed for testing.

struct Averages {
  ad::Var gbar;
  ad::Var lambda;
  ad::Var m;      // scaled averages, N x S
  ad::Var gamma;  // relative log magnitudes, N x S
};
/// g is N x 1; first_step seeds lambda with the new squared averages.
Averages update_moving_averages(const FeatureFlags& flags, const ad::Var& gbar, const ad::Var& lambda, const ad::Var& g,
                                const ad::Var& beta_g, const ad::Var& beta_lambda, bool first_step);

/// h' = z*h + (1-z)*h~ with gates from x*w_x + bias (packed r, z, candidate).
ad::Var gru_cell(const ad::Var& x, const ad::Var& h, const ad::Var& w_x, const ad::Var& w_h_rz, const ad::Var& w_h_h,
                 const ad::Var& bias);

struct StepOutputs {
  std::vector<ad::Var> y;  // per tensor, N x 5
  std::vector<ad::Var> h_param;
  std::vector<ad::Var> h_tensor;
  ad::Var h_global;
};
/// Runs the three cells for one step. x holds the N x (2S+1) inputs per
/// tensor; m the scaled averages used by the shortcut.
StepOutputs hierarchical_step(const Architecture& arch, std::span<const ad::Var> meta, const TapeState& state,
                              std::span<const ad::Var> x, std::span<const ad::Var> m);

struct StepOptions {
  /// Record the gradient computation so later losses can be differentiated
  /// through it (second-order meta-gradients).
  bool create_graph = false;
  /// Evaluate and return the loss at theta. Off, the step returns the loss
  /// at the attended parameters and skips the extra forward pass.
  bool loss_at_theta = true;
};

/// One optimizer iteration: loss at theta, gradient at phi, feature
/// computation, the three cells, and the parameter update. Returns the loss
/// at theta before the update. Throws DivergenceError on a non-finite loss.
ad::Var optimizer_step(ad::Tape& tape, const Architecture& arch, std::span<const ad::Var> meta, TapeState& state,
                       const Problem& problem, const Batch* batch, const StepOptions& options = {});

/// The optimizer half of a step, given the gradients at phi (one per tensor,
/// any shape with the tensor's element count).
void apply_gradients(ad::Tape& tape, const Architecture& arch, std::span<const ad::Var> meta, TapeState& state,
                     std::span<const ad::Var> grads);

/// Plain optimization with fixed meta-parameters: each step runs on a fresh
/// tape and only values are kept.
class LearnedOptimizer {
 public:
  LearnedOptimizer(MetaParams meta, OptimizerState state) : meta_(std::move(meta)), state_(std::move(state)) {}

  /// Returns the minibatch loss at the attended parameters (theta when
  /// attention is off) before the update.
  double step(const Problem& problem, const Batch* batch);

  const OptimizerState& state() const { return state_; }
  const MetaParams& meta() const { return meta_; }
  std::vector<NdArray> params() const { return current_params(state_); }

 private:
  MetaParams meta_;
  OptimizerState state_;
};

}  // namespace lopt
