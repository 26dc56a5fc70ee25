#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lopt/autodiff.hpp"

namespace lopt::ad {

namespace {

double evaluate_at(const ScalarFunction& f, const NdArray& x) {
  Tape tape;
  const Var v = tape.variable(x);
  return f(tape, v).item();
}

}  // namespace

FiniteDiffReport finite_diff_check(const ScalarFunction& f, const NdArray& point, FiniteDiffOptions options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

  Tape tape;
  const Var x = tape.variable(point);
  const Var y = f(tape, x);
  const double f0 = y.item();
  if (!std::isfinite(f0)) throw std::domain_error("finite_diff_check: f is not finite at the point");
  const Var wrt[] = {x};
  const NdArray analytic = gradient_values(y, wrt)[0];

  FiniteDiffReport report;
  report.coordinates.reserve(point.size());
  const double floor = options.relative_floor * std::max(1.0, std::abs(f0));
  const double eps = std::numeric_limits<double>::epsilon();

  for (std::size_t i = 0; i < point.size(); ++i) {
    const double h = options.scale_step ? options.step * std::max(1.0, std::abs(point[i])) : options.step;
    auto shifted = [&](double delta) {
      NdArray p = point;
      p[i] += delta;
      const double v = evaluate_at(f, p);
      if (!std::isfinite(v)) {
        throw std::domain_error("finite_diff_check: f is not finite near coordinate " + std::to_string(i));
      }
      return v;
    };
    const double fp = shifted(h);
    const double fm = shifted(-h);
    const double fp2 = shifted(2 * h);
    const double fm2 = shifted(-2 * h);

    CoordinateCheck c;
    c.index = i;
    c.analytic = analytic[i];
    c.numeric = (fp - fm) / (2 * h);

    // Smooth: one-sided slopes differ by O(h). Kink: they differ by a
    // constant that does not grow with the step.
    const double gap_h = std::abs((fp - f0) / h - (f0 - fm) / h);
    const double gap_2h = std::abs((fp2 - f0) / (2 * h) - (f0 - fm2) / (2 * h));
    const double noise = 64 * eps * std::max(1.0, std::abs(f0)) / h;
    c.smooth = !(gap_h > 10 * noise && gap_2h < 1.5 * gap_h && gap_h > 1e-3 * std::max(1.0, std::abs(c.numeric)));

    const double denom = std::max({std::abs(c.analytic), std::abs(c.numeric), floor});
    c.relative_error = std::abs(c.analytic - c.numeric) / denom;
    report.max_relative_error = std::max(report.max_relative_error, c.relative_error);
    report.non_smooth = report.non_smooth || !c.smooth;
    report.coordinates.push_back(c);
  }
  report.passed = !report.non_smooth && report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace lopt::ad
