#include <array>
#include <stdexcept>

#include "families.hpp"
#include "lopt/random.hpp"

namespace lopt {

namespace {

struct FamilyInfo {
  Family family;
  const char* name;
  detail::DimRange dims;
};

constexpr std::array kFamilies = {
    FamilyInfo{Family::kRosenbrock, "rosenbrock", {2, 10, 2}},
    FamilyInfo{Family::kAckley, "ackley", {2, 10, 2}},
    FamilyInfo{Family::kBeale, "beale", {2, 2, 2}},
    FamilyInfo{Family::kBooth, "booth", {2, 2, 2}},
    FamilyInfo{Family::kStyblinskiTang, "styblinski_tang", {2, 10, 2}},
    FamilyInfo{Family::kMatyas, "matyas", {2, 2, 2}},
    FamilyInfo{Family::kBranin, "branin", {2, 2, 2}},
    FamilyInfo{Family::kMichalewicz, "michalewicz", {2, 10, 2}},
    FamilyInfo{Family::kLogSumExp, "log_sum_exp", {2, 9, 2}},
    FamilyInfo{Family::kQuadraticBowl, "quadratic_bowl", {2, 50, 10}},
    FamilyInfo{Family::kLogisticRegression, "logistic_regression", {2, 10, 2}},
    FamilyInfo{Family::kMinibatchQuadratic, "minibatch_quadratic", {2, 20, 10}},
    FamilyInfo{Family::kNoisyFullbatch, "noisy_fullbatch", {2, 20, 10}},
    FamilyInfo{Family::kOscillatingValley, "oscillating_valley", {5, 20, 5}},
    FamilyInfo{Family::kCoupledChain, "coupled_chain", {8, 16, 8}},
    FamilyInfo{Family::kMinMax, "min_max", {2, 20, 10}},
};

const FamilyInfo& info(Family f) {
  for (const auto& i : kFamilies) {
    if (i.family == f) return i;
  }
  throw std::invalid_argument("unknown family");
}

}  // namespace

namespace detail {
DimRange dim_range(Family f) { return info(f).dims; }
}  // namespace detail

const char* family_name(Family f) { return info(f).name; }

Family parse_family(const std::string& name) {
  for (const auto& i : kFamilies) {
    if (name == i.name) return i.family;
  }
  std::string known;
  for (const auto& i : kFamilies) known += std::string(known.empty() ? "" : ", ") + i.name;
  throw std::invalid_argument("unknown problem family '" + name + "'; known families: " + known);
}

std::vector<Family> all_families() {
  std::vector<Family> out;
  for (const auto& i : kFamilies) out.push_back(i.family);
  return out;
}

std::vector<ProblemSpec> registry_list() {
  std::vector<ProblemSpec> out;
  for (const auto& i : kFamilies) {
    ProblemSpec s;
    s.family = i.family;
    s.dim = i.dims.fallback;
    switch (i.family) {
      case Family::kLogisticRegression:
        s.num_examples = 100;
        s.minibatch = 100;
        s.separable = 1;
        break;
      case Family::kMinibatchQuadratic:
        s.minibatch = 10;
        break;
      case Family::kNoisyFullbatch:
        s.noise_std = 0.5;
        break;
      default:
        break;
    }
    out.push_back(s);
  }
  return out;
}

namespace {

ProblemPtr instantiate_family(const ProblemSpec& spec, Rng& rng) {
  const auto range = detail::dim_range(spec.family);
  const std::int64_t dim = spec.dim != 0 ? spec.dim : uniform_int(rng, range.lo, range.hi);
  if (dim < range.lo || dim > range.hi) {
    throw std::invalid_argument(std::string(family_name(spec.family)) + ": dimension " + std::to_string(dim) +
                                " outside [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");
  }
  if (spec.minibatch != 0 && (spec.minibatch < 10 || spec.minibatch > 200)) {
    throw std::invalid_argument("minibatch size must lie in [10, 200], got " + std::to_string(spec.minibatch));
  }
  if (spec.noise_std != 0.0 && (spec.noise_std < 0.1 || spec.noise_std > 2.0)) {
    throw std::invalid_argument("noise std must lie in [0.1, 2.0], got " + std::to_string(spec.noise_std));
  }
  const std::uint64_t data_seed = derive_seed(spec.seed, {0xda7a});
  switch (spec.family) {
    case Family::kRosenbrock: return detail::make_rosenbrock(dim);
    case Family::kAckley: return detail::make_ackley(dim);
    case Family::kBeale: return detail::make_beale();
    case Family::kBooth: return detail::make_booth();
    case Family::kStyblinskiTang: return detail::make_styblinski_tang(dim);
    case Family::kMatyas: return detail::make_matyas();
    case Family::kBranin: return detail::make_branin();
    case Family::kMichalewicz: return detail::make_michalewicz(dim);
    case Family::kLogSumExp: return detail::make_log_sum_exp(dim, data_seed);
    case Family::kQuadraticBowl: return detail::make_quadratic_bowl(dim, data_seed);
    case Family::kNoisyFullbatch: {
      const double sigma = spec.noise_std != 0.0 ? spec.noise_std : uniform(rng, 0.1, 2.0);
      return detail::make_noisy_fullbatch(dim, sigma, data_seed);
    }
    case Family::kMinibatchQuadratic: {
      const std::int64_t b = spec.minibatch != 0 ? spec.minibatch : uniform_int(rng, 10, 200);
      return detail::make_minibatch_quadratic(dim, b);
    }
    case Family::kLogisticRegression: {
      const std::int64_t n = spec.num_examples != 0 ? spec.num_examples : uniform_int(rng, 100, 400);
      if (n < 2) throw std::invalid_argument("logistic_regression: need at least 2 examples");
      const std::int64_t b = spec.minibatch != 0 ? spec.minibatch : uniform_int(rng, 10, 200);
      const bool separable = spec.separable >= 0 ? spec.separable == 1 : std::bernoulli_distribution(0.9)(rng);
      return detail::make_logistic_regression(dim, n, std::min(b, n), separable, data_seed);
    }
    case Family::kOscillatingValley: return detail::make_oscillating_valley(dim);
    case Family::kCoupledChain: return detail::make_coupled_chain(dim);
    case Family::kMinMax: return detail::make_min_max(dim);
  }
  throw std::invalid_argument("unknown family");
}

}  // namespace

ProblemPtr instantiate(const ProblemSpec& spec) {
  Rng rng(derive_seed(spec.seed, {0x5bec}));
  ProblemPtr p = instantiate_family(spec, rng);
  for (std::size_t i = 0; i < spec.transforms.size(); ++i) {
    const TransformSpec& ts = spec.transforms[i];
    Transformation t;
    t.kind = ts.kind;
    t.seed = derive_seed(spec.seed, {0x7f, i});
    switch (ts.kind) {
      case TransformKind::kSparseGradient: {
        static constexpr std::array kKeep = {0.01, 0.05, 0.1, 0.25};
        t.keep_fraction = ts.value != 0.0 ? ts.value : kKeep[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
        break;
      }
      case TransformKind::kRescale:
        break;
      case TransformKind::kMonotonic: {
        static constexpr std::array kPowers = {0.5, 2.0, 3.0};
        if (ts.value < 0.0) throw std::invalid_argument("power: exponent must be positive");
        t.power = ts.value != 0.0 ? ts.value : kPowers[static_cast<std::size_t>(uniform_int(rng, 0, 2))];
        break;
      }
      case TransformKind::kMultiTask:
        if (ts.tasks.empty()) throw std::invalid_argument("multi_task: at least one extra problem required");
        for (std::size_t k = 0; k < ts.tasks.size(); ++k) {
          ProblemSpec sub;
          sub.family = ts.tasks[k];
          sub.seed = derive_seed(spec.seed, {0x3a5c, i, k});
          t.tasks.push_back(instantiate(sub));
        }
        break;
    }
    p = apply_transformation(std::move(p), t);
  }
  return p;
}

ProblemSpec sample_corpus_spec(std::span<const Family> families, std::uint64_t seed) {
  if (families.empty()) throw std::invalid_argument("sample_corpus_spec: empty family list");
  Rng rng(derive_seed(seed, {0xc0b9}));
  ProblemSpec s;
  s.family = families[static_cast<std::size_t>(uniform_int(rng, 0, std::ssize(families) - 1))];
  s.seed = derive_seed(seed, {0x5eed});
  std::uniform_real_distribution<double> u;
  if (u(rng) < 0.15) s.transforms.push_back({TransformKind::kSparseGradient, 0.0, {}});
  if (u(rng) < 0.15) s.transforms.push_back({TransformKind::kRescale, 0.0, {}});
  if (u(rng) < 0.1) {
    TransformSpec t{TransformKind::kMultiTask, 0.0, {}};
    t.tasks.push_back(families[static_cast<std::size_t>(uniform_int(rng, 0, std::ssize(families) - 1))]);
    s.transforms.push_back(t);
  }
  if (u(rng) < 0.1) s.transforms.push_back({TransformKind::kMonotonic, 0.0, {}});
  return s;
}

}  // namespace lopt
