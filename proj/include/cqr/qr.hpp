#pragma once

#include "cqr/data.hpp"
#include "cqr/lp.hpp"
#include "cqr/types.hpp"

namespace cqr {

/// Result of a single quantile regression fit.
struct QrFit {
  FixedEffects beta;
  /// Standard errors; empty when the fit was run without them.
  VectorXd se;
  /// Full sandwich covariance (p x p); empty without standard errors.
  MatrixXd cov;
  /// y - offset - X beta.
  VectorXd residuals;
  double objective = 0.0;
  double tau = 0.5;
  int iterations = 0;
};

struct QrOptions {
  bool compute_se = true;
  LpOptions lp;
};

/// rho_tau(v) = v (tau - 1{v < 0}).
double check_loss(double v, double tau);

/// Sum of check losses in index order.
double check_loss_sum(const VectorXd& residuals, double tau);

/// L(beta, u; Y) summed cluster-major, observation-minor.
double objective(const FixedEffects& beta, const RandomEffects& u, const ClusteredDataset& data,
                 QuantileLevel tau);

QrFit fit_qr(const VectorXd& y, const MatrixXd& X, QuantileLevel tau,
             const QrOptions& options = {});

/// Same as fit_qr on (y - offset, X).
QrFit fit_qr(const VectorXd& y, const MatrixXd& X, QuantileLevel tau, const VectorXd& offset,
             const QrOptions& options = {});

/// Exhaustive search over interpolating p-subsets. Small instances only.
FixedEffects brute_force_qr(const VectorXd& y, const MatrixXd& X, QuantileLevel tau);

/// Hall-Sheather bandwidth for the sparsity estimate at level tau.
double hall_sheather_bandwidth(Index n, double tau, double alpha = 0.05);

/// Huber sandwich tau(1 - tau) H^-1 J H^-1 with local density weights from
/// fits at tau +/- h.
MatrixXd sandwich_covariance(const VectorXd& y, const MatrixXd& X, QuantileLevel tau,
                             const FixedEffects& beta_hat);

VectorXd standard_errors(const VectorXd& y, const MatrixXd& X, QuantileLevel tau,
                         const FixedEffects& beta_hat);

}  // namespace cqr
