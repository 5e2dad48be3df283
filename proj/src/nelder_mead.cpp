#include "cqr/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "cqr/error.hpp"

namespace cqr {

NelderMeadResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                             const NelderMeadOptions& options) {
  const Index d = x0.size();
  if (d < 1) throw Error(ErrorCode::invalid_argument, "Nelder-Mead needs at least one parameter");
  if (options.steps.size() != 0 && options.steps.size() != d)
    throw Error(ErrorCode::invalid_argument, "one initial step per parameter is required");
  const long budget = options.max_evaluations > 0 ? options.max_evaluations : 2000L * d;

  const double dd = static_cast<double>(d);
  const double alpha = 1.0;
  const double gamma = d > 2 ? 1.0 + 2.0 / dd : 2.0;
  const double rho = d > 2 ? 0.75 - 1.0 / (2.0 * dd) : 0.5;
  const double shrink = d > 2 ? 1.0 - 1.0 / dd : 0.5;

  NelderMeadResult result;
  auto eval = [&](const VectorXd& x) {
    ++result.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<VectorXd> simplex(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> values(static_cast<std::size_t>(d + 1));
  values[0] = eval(x0);
  for (Index k = 0; k < d; ++k) {
    const double step = options.steps.size() ? options.steps(k) : 0.1;
    simplex[static_cast<std::size_t>(k + 1)](k) += step;
    values[static_cast<std::size_t>(k + 1)] = eval(simplex[static_cast<std::size_t>(k + 1)]);
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(d + 1));
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<VectorXd> s2;
    std::vector<double> v2;
    for (std::size_t i : order) {
      s2.push_back(std::move(simplex[i]));
      v2.push_back(values[i]);
    }
    simplex = std::move(s2);
    values = std::move(v2);
  };

  const std::size_t worst = static_cast<std::size_t>(d);
  while (true) {
    sort_simplex();
    if (values[worst] - values[0] < options.tolerance) {
      result.converged = true;
      break;
    }
    if (result.evaluations >= budget) break;

    VectorXd centroid = VectorXd::Zero(d);
    for (std::size_t i = 0; i < worst; ++i) centroid += simplex[i];
    centroid /= dd;

    const VectorXd xr = centroid + alpha * (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr < values[0]) {
      const VectorXd xe = centroid + gamma * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[worst - 1]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    if (fr < values[worst]) {
      const VectorXd xc = centroid + rho * (xr - centroid);
      const double fc = eval(xc);
      if (fc <= fr) {
        simplex[worst] = xc;
        values[worst] = fc;
        continue;
      }
    } else {
      const VectorXd xc = centroid + rho * (simplex[worst] - centroid);
      const double fc = eval(xc);
      if (fc < values[worst]) {
        simplex[worst] = xc;
        values[worst] = fc;
        continue;
      }
    }
    for (std::size_t i = 1; i <= worst; ++i) {
      simplex[i] = simplex[0] + shrink * (simplex[i] - simplex[0]);
      values[i] = eval(simplex[i]);
    }
  }
  result.x = simplex[0];
  result.value = values[0];
  return result;
}

}  // namespace cqr
