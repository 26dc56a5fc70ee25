#pragma once

#include <cstdint>
#include <utility>

#include "lopt/problems.hpp"

namespace lopt::detail {

/// Inclusive dimension range of a family and the default used by registry_list.
struct DimRange {
  std::int64_t lo;
  std::int64_t hi;
  std::int64_t fallback;
};
DimRange dim_range(Family f);

ProblemPtr make_rosenbrock(std::int64_t dim);
ProblemPtr make_ackley(std::int64_t dim);
ProblemPtr make_beale();
ProblemPtr make_booth();
ProblemPtr make_styblinski_tang(std::int64_t dim);
ProblemPtr make_matyas();
ProblemPtr make_branin();
ProblemPtr make_michalewicz(std::int64_t dim);
ProblemPtr make_log_sum_exp(std::int64_t dim, std::uint64_t seed);
ProblemPtr make_oscillating_valley(std::int64_t dim);
ProblemPtr make_coupled_chain(std::int64_t dim);
ProblemPtr make_min_max(std::int64_t dim);

ProblemPtr make_quadratic_bowl(std::int64_t dim, std::uint64_t seed);
ProblemPtr make_noisy_fullbatch(std::int64_t dim, double noise_std, std::uint64_t seed);
ProblemPtr make_minibatch_quadratic(std::int64_t dim, std::int64_t minibatch);
ProblemPtr make_logistic_regression(std::int64_t dim, std::int64_t num_examples, std::int64_t minibatch, bool separable,
                                    std::uint64_t seed);

}  // namespace lopt::detail
