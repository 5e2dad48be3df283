#pragma once

#include "cqr/data.hpp"
#include "cqr/quadrature.hpp"
#include "cqr/types.hpp"

namespace cqr {

/// Asymmetric Laplace location, scale and skew.
struct AldParams {
  double mu = 0.0;
  double sigma = 1.0;
  double tau = 0.5;
};

/// log f(y) = log(tau (1 - tau) / sigma) - rho_tau((y - mu) / sigma).
double ald_logpdf(double y, const AldParams& params);

/// Scale of the Gaussian random effects: the lower Cholesky factor L of
/// their covariance (q x q). For q = 1 this is the standard deviation phi.
struct ReScale {
  MatrixXd chol;

  static ReScale scalar(double phi);
  Index q() const { return chol.rows(); }
  double phi() const { return chol(0, 0); }
  MatrixXd covariance() const { return chol * chol.transpose(); }
};

/// How cluster effects are predicted after the fit.
enum class BlpMethod {
  /// Quadrature posterior mean under the working model.
  posterior_mean,
  /// Linear predictor Psi Z'(Z Psi Z' + v I)^-1 (r - m 1), with m and v the
  /// mean and variance of the fitted asymmetric Laplace error.
  linear,
};

struct LqmmOptions {
  int nK = 15;
  /// Nelder-Mead evaluation budget; 0 means 2000 * dimension.
  long max_evaluations = 0;
  double tolerance = 1e-6;
  BlpMethod blp = BlpMethod::linear;

  /// Optional starting point (beta, sigma, scale); skips the default
  /// initialization when set.
  bool has_start = false;
  FixedEffects start_beta;
  double start_sigma = 1.0;
  ReScale start_scale;
};

struct LqmmFit {
  FixedEffects beta;
  double sigma = 1.0;
  ReScale re_scale;
  double loglik = 0.0;
  /// Centered predictions (N x q).
  RandomEffects blp;
  RandomEffects blp_raw;
  bool converged = false;
  long n_evals = 0;
  double tau = 0.5;
  int nK = 15;
};

/// Gauss-Hermite approximation of the log pseudo-likelihood with the random
/// effects integrated out, summed over clusters in index order.
double marginal_loglik(const FixedEffects& beta, double sigma, const ReScale& re_scale,
                       const ClusteredDataset& data, QuantileLevel tau, int nK);

/// Per-cluster log-likelihood contributions.
VectorXd cluster_loglik(const FixedEffects& beta, double sigma, const ReScale& re_scale,
                        const ClusteredDataset& data, QuantileLevel tau, int nK);

LqmmFit fit_lqmm(const ClusteredDataset& data, QuantileLevel tau, const LqmmOptions& options = {});

/// Uncentered predictions of the cluster effects (N x q).
RandomEffects predict_blp(const FixedEffects& beta, double sigma, const ReScale& re_scale,
                          const ClusteredDataset& data, QuantileLevel tau, int nK,
                          BlpMethod method = BlpMethod::posterior_mean);

/// Subtracts each column's unweighted mean over clusters.
RandomEffects center(const RandomEffects& blp_raw);

}  // namespace cqr
