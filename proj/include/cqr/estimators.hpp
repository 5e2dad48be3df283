#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cqr/data.hpp"
#include "cqr/lqmm.hpp"
#include "cqr/qr.hpp"
#include "cqr/random.hpp"

namespace cqr {

// ---------------------------------------------------------------------------
// Quantile regression with known or estimated cluster offsets
// ---------------------------------------------------------------------------

/// QR on y - Z'u_true.
QrFit fit_oracle(const ClusteredDataset& data, const RandomEffects& u_true, QuantileLevel tau,
                 const QrOptions& options = {});

/// QR on the stacked data, ignoring clusters.
QrFit fit_marginal(const ClusteredDataset& data, QuantileLevel tau, const QrOptions& options = {});

/// Cluster intercepts from the within (demeaned) mean regression, centered
/// across clusters.
VectorXd canay_offsets(const ClusteredDataset& data);

/// QR on y - u_hat with u_hat from canay_offsets. Random intercepts only.
QrFit fit_canay(const ClusteredDataset& data, QuantileLevel tau, const QrOptions& options = {});

// ---------------------------------------------------------------------------
// Penalized fixed-effects quantile regression
// ---------------------------------------------------------------------------

enum class PenaltyKind { l1, l2 };

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::l1;
  /// Used when `cross_validate` is false.
  double lambda = 1.0;
  bool cross_validate = false;
  /// Candidate values; empty selects the default grid.
  std::vector<double> grid;
  int folds = 5;

  static PenaltySpec fixed(PenaltyKind kind, double lambda);
  static PenaltySpec cv(PenaltyKind kind, std::vector<double> grid = {}, int folds = 5);
};

struct PenalizedFit {
  FixedEffects beta;
  /// One intercept per cluster, in input order.
  VectorXd u;
  double lambda = 0.0;
  /// Check loss plus penalty at the solution.
  double objective = 0.0;
  double check_loss = 0.0;
  int iterations = 0;
};

PenalizedFit fit_penalized(const ClusteredDataset& data, QuantileLevel tau, const PenaltySpec& spec);

/// Twenty log-spaced values from 0.01 s to 10 s, s the normal-consistent
/// MAD of marginal-QR residuals.
std::vector<double> default_lambda_grid(const ClusteredDataset& data, QuantileLevel tau);

/// Fold of local row j of the k-th cluster (in canonical order).
inline int cv_fold(Index cluster_rank, Index local_row, int folds) {
  return static_cast<int>((cluster_rank + local_row) % folds);
}

/// Held-out mean check loss for every grid value, grid sorted ascending.
std::vector<double> cross_validation_scores(const ClusteredDataset& data, QuantileLevel tau,
                                            PenaltyKind kind, const std::vector<double>& grid,
                                            int folds);

/// Smallest score wins; exact ties go to the larger lambda.
double select_lambda(const std::vector<double>& sorted_grid, const std::vector<double>& scores);

double cross_validate_lambda(const ClusteredDataset& data, QuantileLevel tau,
                             const PenaltySpec& spec);

// ---------------------------------------------------------------------------
// Two-step estimator
// ---------------------------------------------------------------------------

struct TwoStepOptions {
  LqmmOptions lqmm;
  bool compute_se = true;
};

struct TwoStepFit {
  FixedEffects beta;
  /// Centered predictions used as offsets (N x q).
  RandomEffects blp;
  VectorXd se_obs;
  MatrixXd cov;
  /// y - X beta - Z blp, per observation in input order.
  VectorXd residuals;
  double objective = 0.0;
  LqmmFit lqmm;
  /// False when the LQMM step did not converge.
  bool converged = true;
};

TwoStepFit fit_twostep(const ClusteredDataset& data, QuantileLevel tau,
                       const TwoStepOptions& options = {});

/// Step 2 alone with caller-supplied effects.
TwoStepFit twostep_with_effects(const ClusteredDataset& data, QuantileLevel tau,
                                const RandomEffects& u, bool compute_se = true);

// ---------------------------------------------------------------------------
// Half-panel jackknife
// ---------------------------------------------------------------------------

using BaseEstimator = std::function<FixedEffects(const ClusteredDataset&)>;

/// Random half-split of every cluster; local row indices, each half sorted.
std::pair<std::vector<std::vector<Index>>, std::vector<std::vector<Index>>> half_split(
    const ClusteredDataset& data, Rng& rng);

/// 2 b - (b1 + b2) / 2 with b1, b2 from the two half-panels.
FixedEffects jackknife_adjust(const ClusteredDataset& data, const BaseEstimator& base, Rng& rng);

// ---------------------------------------------------------------------------
// Named estimators
// ---------------------------------------------------------------------------

enum class EstimatorKind {
  oracle,
  marginal,
  canay,
  l1pen,
  l2pen,
  lqmm,
  jackknife,
  twostep,
  adjusted,
};

const char* estimator_name(EstimatorKind kind);
/// Accepts the names returned by estimator_name.
EstimatorKind parse_estimator(const std::string& name);

}  // namespace cqr
