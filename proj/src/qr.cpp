#include "cqr/qr.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "cqr/error.hpp"

namespace cqr {

double check_loss(double v, double tau) { return v < 0.0 ? (tau - 1.0) * v : tau * v; }

double check_loss_sum(const VectorXd& residuals, double tau) {
  double total = 0.0;
  for (Index i = 0; i < residuals.size(); ++i) total += check_loss(residuals(i), tau);
  return total;
}

double objective(const FixedEffects& beta, const RandomEffects& u, const ClusteredDataset& data,
                 QuantileLevel tau) {
  if (beta.size() != data.p())
    throw Error(ErrorCode::invalid_argument, "beta length does not match the design");
  if (u.rows() != data.n_clusters() || u.cols() != data.q())
    throw Error(ErrorCode::invalid_argument, "random effects must be N x q");
  double total = 0.0;
  for (Index i = 0; i < data.n_clusters(); ++i) {
    for (Index j = 0; j < data.size(i); ++j) {
      const Index r = data.offset(i) + j;
      const double fitted = data.X().row(r).dot(beta) + data.Z().row(r).dot(u.row(i));
      total += check_loss(data.y()(r) - fitted, tau);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

void require_full_rank(const MatrixXd& X) {
  if (X.rows() <= X.cols())
    throw Error(ErrorCode::precondition,
                "need more observations (" + std::to_string(X.rows()) + ") than coefficients (" +
                    std::to_string(X.cols()) + ")");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols())
    throw Error(ErrorCode::singular_design,
                "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(X.cols()));
}

QrFit fit_unchecked(const VectorXd& y, const MatrixXd& X, double tau, const QrOptions& options) {
  DenseDesign design(X);
  LpResult lp = solve_check_loss(design, y, tau, options.lp);
  QrFit fit;
  fit.beta = std::move(lp.coef);
  fit.residuals = std::move(lp.residuals);
  fit.objective = lp.objective;
  fit.tau = tau;
  fit.iterations = lp.iterations;
  return fit;
}

}  // namespace

QrFit fit_qr(const VectorXd& y, const MatrixXd& X, QuantileLevel tau, const QrOptions& options) {
  if (y.size() != X.rows())
    throw Error(ErrorCode::invalid_argument, "response length does not match the design");
  if (!y.allFinite() || !X.allFinite())
    throw Error(ErrorCode::invalid_argument, "non-finite values in regression input");
  require_full_rank(X);
  QrFit fit = fit_unchecked(y, X, tau, options);
  if (options.compute_se) {
    fit.cov = sandwich_covariance(y, X, tau, fit.beta);
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return fit;
}

QrFit fit_qr(const VectorXd& y, const MatrixXd& X, QuantileLevel tau, const VectorXd& offset,
             const QrOptions& options) {
  if (offset.size() != y.size())
    throw Error(ErrorCode::invalid_argument, "offset length does not match the response");
  return fit_qr(VectorXd(y - offset), X, tau, options);
}

FixedEffects brute_force_qr(const VectorXd& y, const MatrixXd& X, QuantileLevel tau) {
  const Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw Error(ErrorCode::invalid_argument, "response length mismatch");
  if (p < 1 || n < p) throw Error(ErrorCode::precondition, "need n >= p >= 1");
  double combos = 1.0;
  for (Index k = 0; k < p; ++k) combos = combos * static_cast<double>(n - k) / static_cast<double>(k + 1);
  if (combos > 1e6) throw Error(ErrorCode::precondition, "instance too large for enumeration");

  std::vector<Index> pick(static_cast<std::size_t>(p));
  for (Index k = 0; k < p; ++k) pick[static_cast<std::size_t>(k)] = k;
  FixedEffects best;
  double best_obj = std::numeric_limits<double>::infinity();
  MatrixXd sub(p, p);
  VectorXd rhs(p);
  while (true) {
    for (Index k = 0; k < p; ++k) {
      sub.row(k) = X.row(pick[static_cast<std::size_t>(k)]);
      rhs(k) = y(pick[static_cast<std::size_t>(k)]);
    }
    Eigen::FullPivLU<MatrixXd> lu(sub);
    if (lu.isInvertible()) {
      const VectorXd b = lu.solve(rhs);
      const double obj = check_loss_sum(y - X * b, tau);
      if (obj < best_obj) {
        best_obj = obj;
        best = b;
      }
    }
    // Next combination in lexicographic order.
    Index k = p - 1;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == n - p + k) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (Index j = k + 1; j < p; ++j)
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  if (best.size() == 0)
    throw Error(ErrorCode::singular_design, "every p-subset of the design is singular");
  return best;
}

// ---------------------------------------------------------------------------
// Standard errors
// ---------------------------------------------------------------------------

double hall_sheather_bandwidth(Index n, double tau, double alpha) {
  const boost::math::normal std_normal;
  const double z_alpha = boost::math::quantile(std_normal, 1.0 - alpha / 2.0);
  const double z_tau = boost::math::quantile(std_normal, tau);
  const double phi = boost::math::pdf(std_normal, z_tau);
  return std::pow(static_cast<double>(n), -1.0 / 3.0) * std::pow(z_alpha, 2.0 / 3.0) *
         std::cbrt(1.5 * phi * phi / (2.0 * z_tau * z_tau + 1.0));
}

MatrixXd sandwich_covariance(const VectorXd& y, const MatrixXd& X, QuantileLevel tau,
                             const FixedEffects& beta_hat) {
  const Index n = X.rows();
  if (beta_hat.size() != X.cols())
    throw Error(ErrorCode::invalid_argument, "beta length does not match the design");
  double h = hall_sheather_bandwidth(n, tau);
  const double lo_limit = 0.001, hi_limit = 0.999;
  if (tau - h < lo_limit || tau + h > hi_limit) {
    h = std::min(tau - lo_limit, hi_limit - tau);
    warn("sparsity bandwidth clipped to " + std::to_string(h) + " at tau=" +
         std::to_string(tau.value()));
  }
  QrOptions quiet;
  quiet.compute_se = false;
  const FixedEffects b_hi = fit_unchecked(y, X, tau + h, quiet).beta;
  const FixedEffects b_lo = fit_unchecked(y, X, tau - h, quiet).beta;
  const VectorXd dq = X * (b_hi - b_lo);
  const double eps = std::numeric_limits<double>::epsilon();
  VectorXd f(n);
  for (Index i = 0; i < n; ++i) f(i) = dq(i) > 0.0 ? std::max(eps, 2.0 * h / dq(i)) : eps;

  const MatrixXd J = X.transpose() * X;
  const MatrixXd H = X.transpose() * f.asDiagonal() * X;
  Eigen::FullPivLU<MatrixXd> lu(H);
  if (!lu.isInvertible()) {
    // Too few distinct density estimates to identify the sparsity; the
    // coefficients are fine but their spread is not estimable.
    warn("density-weighted design is singular; standard errors set to infinity");
    MatrixXd cov = MatrixXd::Constant(X.cols(), X.cols(), std::numeric_limits<double>::quiet_NaN());
    cov.diagonal().setConstant(std::numeric_limits<double>::infinity());
    return cov;
  }
  const MatrixXd Hinv = lu.inverse();
  MatrixXd cov = tau * (1.0 - tau) * Hinv * J * Hinv;
  return 0.5 * (cov + cov.transpose());
}

VectorXd standard_errors(const VectorXd& y, const MatrixXd& X, QuantileLevel tau,
                         const FixedEffects& beta_hat) {
  return sandwich_covariance(y, X, tau, beta_hat).diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace cqr
