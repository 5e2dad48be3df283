#pragma once

#include <functional>

#include "cqr/types.hpp"

namespace cqr {

struct NelderMeadOptions {
  /// Stop once f(worst) - f(best) < tolerance.
  double tolerance = 1e-6;
  /// Evaluation budget; 0 means 2000 * dimension.
  long max_evaluations = 0;
  /// Initial simplex step per coordinate; empty means 0.1 for every one.
  VectorXd steps;
};

struct NelderMeadResult {
  VectorXd x;
  double value = 0.0;
  long evaluations = 0;
  bool converged = false;
};

/// Minimizes f by the Nelder-Mead simplex method. Uses the standard
/// coefficients in dimension <= 2 and dimension-adaptive ones above.
/// Non-finite function values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                             const NelderMeadOptions& options = {});

}  // namespace cqr
