#include "cqr/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cqr/error.hpp"

namespace cqr {

QuadratureRule gauss_hermite(int nK) {
  if (nK < 1 || nK > 64)
    throw Error(ErrorCode::invalid_argument,
                "quadrature size must be in [1, 64], got " + std::to_string(nK));
  const int n = nK;
  VectorXd x(n), w(n);
  // Newton iteration on orthonormal Hermite polynomials (physicists' weight
  // exp(-x^2)), roots found from the largest downwards.
  const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
  double z = 0.0;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x(0);
    else if (i == 3)
      z = 1.91 * z - 0.91 * x(1);
    else
      z = 2.0 * z - x(i - 2);
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x(i) = z;
    x(n - 1 - i) = -z;
    w(i) = 2.0 / (pp * pp);
    w(n - 1 - i) = w(i);
  }
  if (n % 2 == 1) x(n / 2) = 0.0;

  QuadratureRule rule;
  rule.nodes = std::sqrt(2.0) * x.reverse();
  rule.weights = w.reverse() / w.sum();
  // Enforce exact symmetry.
  for (int i = 0; i < n / 2; ++i) {
    const double node = 0.5 * (rule.nodes(n - 1 - i) - rule.nodes(i));
    const double weight = 0.5 * (rule.weights(i) + rule.weights(n - 1 - i));
    rule.nodes(i) = -node;
    rule.nodes(n - 1 - i) = node;
    rule.weights(i) = rule.weights(n - 1 - i) = weight;
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

TensorRule tensor_rule(const QuadratureRule& rule, int dim) {
  if (dim < 1) throw Error(ErrorCode::invalid_argument, "tensor dimension must be positive");
  const Index k = rule.nodes.size();
  Index total = 1;
  for (int d = 0; d < dim; ++d) total *= k;
  TensorRule out;
  out.nodes.resize(total, dim);
  out.log_weights.resize(total);
  for (Index g = 0; g < total; ++g) {
    Index rest = g;
    double lw = 0.0;
    for (int d = dim - 1; d >= 0; --d) {
      const Index idx = rest % k;
      rest /= k;
      out.nodes(g, d) = rule.nodes(idx);
      lw += std::log(rule.weights(idx));
    }
    out.log_weights(g) = lw;
  }
  return out;
}

}  // namespace cqr
