#pragma once

// Target problems for meta-training and evaluation.
//
// A Problem is immutable after construction. Its loss is recorded on the
// caller's tape, so the optimizer can differentiate through it. Stochastic
// problems draw a Batch per step from a step seed; passing no batch asks for
// the clean full-batch (or expected) loss.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lopt/autodiff.hpp"

namespace lopt {

enum class Family {
  kRosenbrock,
  kAckley,
  kBeale,
  kBooth,
  kStyblinskiTang,
  kMatyas,
  kBranin,
  kMichalewicz,
  kLogSumExp,
  kQuadraticBowl,
  kLogisticRegression,
  kMinibatchQuadratic,
  kNoisyFullbatch,
  kOscillatingValley,
  kCoupledChain,
  kMinMax,
};

const char* family_name(Family f);
/// Throws std::invalid_argument listing every known family.
Family parse_family(const std::string& name);
std::vector<Family> all_families();

/// Per-step random draw. Leaf problems use `arrays`; wrappers nest the batch of
/// the problem they wrap in `children`.
struct Batch {
  std::vector<NdArray> arrays;
  std::vector<Batch> children;
};

class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual std::vector<Shape> param_shapes() const = 0;
  virtual std::vector<NdArray> sample_init(std::uint64_t seed) const = 0;

  /// Scalar loss. Throws ShapeError when params do not match param_shapes().
  ad::Var loss(ad::Tape& tape, std::span<const ad::Var> params, const Batch* batch = nullptr) const;
  /// Convenience: loss of plain values on a scratch tape.
  double loss_value(std::span<const NdArray> params, const Batch* batch = nullptr) const;

  /// Whether each step needs a fresh Batch (minibatches, gradient masks, noise).
  virtual bool stochastic() const { return false; }
  /// Throws std::logic_error on problems that are not stochastic.
  virtual Batch sample_batch(std::uint64_t seed) const;

  /// Applies per-step gradient effects (sparsity masks, additive noise).
  virtual std::vector<ad::Var> transform_gradient(ad::Tape& tape, std::vector<ad::Var> grads, const Batch& batch) const {
    return grads;
  }

  /// Known minimum value, when declared.
  virtual std::optional<double> global_min() const { return std::nullopt; }
  /// A point attaining global_min, when one exists at finite distance.
  virtual std::optional<std::vector<NdArray>> minimizer() const { return std::nullopt; }

  std::int64_t num_params() const;

 protected:
  virtual ad::Var loss_impl(ad::Tape& tape, std::span<const ad::Var> params, const Batch* batch) const = 0;
};

using ProblemPtr = std::shared_ptr<const Problem>;

enum class TransformKind { kSparseGradient, kRescale, kMonotonic, kMultiTask };

const char* transform_name(TransformKind k);

/// A transformation as written in a spec. Zero-valued parameters are drawn
/// from the spec seed at instantiation.
struct TransformSpec {
  TransformKind kind = TransformKind::kRescale;
  double value = 0.0;                  // keep fraction or power
  std::vector<Family> tasks;           // extra problems for multi-task
};

struct ProblemSpec {
  Family family = Family::kQuadraticBowl;
  std::int64_t dim = 0;                // 0: drawn from the family's range
  std::uint64_t seed = 0;
  std::vector<TransformSpec> transforms{};
  std::int64_t minibatch = 0;          // 0: family default
  double noise_std = 0.0;              // 0: drawn
  std::int64_t num_examples = 0;       // 0: family default
  int separable = -1;                  // -1: drawn, 0/1: forced
};

/// One template per family with defaults filled in.
std::vector<ProblemSpec> registry_list();

/// Deterministic in the spec: same spec gives identical coupling matrices,
/// data, and offsets. Throws std::invalid_argument on invalid specs.
ProblemPtr instantiate(const ProblemSpec& spec);

/// Transformation with explicit parameters.
struct Transformation {
  TransformKind kind = TransformKind::kRescale;
  double keep_fraction = 0.1;
  /// Per-tensor diagonal for rescale; empty means draw log-uniform from seed.
  std::vector<NdArray> scales{};
  std::uint64_t seed = 0;
  double power = 2.0;
  std::vector<ProblemPtr> tasks{};
};

ProblemPtr apply_transformation(ProblemPtr problem, const Transformation& t);
/// Sum of losses over concatenated parameter lists. Throws on an empty list.
ProblemPtr make_multi_task(std::vector<ProblemPtr> problems);

/// Random spec for meta-training drawn from `families`, with occasional
/// transformations.
ProblemSpec sample_corpus_spec(std::span<const Family> families, std::uint64_t seed);

/// Losses above this (or non-finite) count as divergence.
inline constexpr double kDivergenceLoss = 1e10;
inline bool is_divergent(double loss) { return !(std::abs(loss) <= kDivergenceLoss); }

/// The batch for step `step` of a run seeded with `seed`; empty for
/// deterministic problems.
std::optional<Batch> draw_batch(const Problem& problem, std::uint64_t seed, std::int64_t step);

/// Two-layer fully connected classifier on synthetic or supplied data. Used
/// for evaluation and overhead measurement only; never part of the corpus.
struct MlpConfig {
  std::int64_t inputs = 64;
  std::int64_t hidden = 32;
  std::int64_t classes = 10;
  std::int64_t num_examples = 4096;
  std::int64_t minibatch = 64;
  std::uint64_t seed = 0;
};
ProblemPtr make_mlp_problem(const MlpConfig& config);
/// Same model over caller-supplied rows of `features` and integer `labels`.
ProblemPtr make_mlp_problem(const MlpConfig& config, NdArray features, std::vector<int> labels);

}  // namespace lopt
