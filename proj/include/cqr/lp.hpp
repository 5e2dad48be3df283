#pragma once

#include <vector>

#include "cqr/types.hpp"

namespace cqr {

// ---------------------------------------------------------------------------
// Designs
// ---------------------------------------------------------------------------

/// Row-structured design D (rows x cols) for check-loss regression
/// min_b sum_r rho_tau(y_r - d_r'b). Implementations supply the products the
/// interior-point method needs, so structured designs never form D densely.
class LpDesign {
 public:
  virtual ~LpDesign() = default;

  virtual Index rows() const = 0;
  virtual Index cols() const = 0;

  /// out = D b (length rows()).
  virtual VectorXd multiply(const VectorXd& b) const = 0;
  /// out = D' v (length cols()).
  virtual VectorXd multiply_transpose(const VectorXd& v) const = 0;

  /// Factors D' diag(theta) D. Returns false when the matrix is numerically
  /// singular.
  virtual bool factor(const VectorXd& theta) = 0;
  /// Solves with the most recent factorization.
  virtual VectorXd solve(const VectorXd& rhs) const = 0;

  /// Explicit row r, used by the vertex polish.
  virtual VectorXd row(Index r) const = 0;
};

/// Plain dense design matrix.
class DenseDesign final : public LpDesign {
 public:
  explicit DenseDesign(const MatrixXd& X) : X_(X) {}

  Index rows() const override { return X_.rows(); }
  Index cols() const override { return X_.cols(); }
  VectorXd multiply(const VectorXd& b) const override { return X_ * b; }
  VectorXd multiply_transpose(const VectorXd& v) const override { return X_.transpose() * v; }
  bool factor(const VectorXd& theta) override;
  VectorXd solve(const VectorXd& rhs) const override;
  VectorXd row(Index r) const override { return X_.row(r).transpose(); }

 private:
  const MatrixXd& X_;
  Eigen::LDLT<MatrixXd> ldlt_;
};

/// Fixed design X augmented by cluster-indicator columns, plus 2N penalty
/// rows +lambda e_k and -lambda e_k with zero response. Because
/// rho_tau(v) + rho_tau(-v) = |v|, the penalty rows contribute lambda |u_k|.
///
/// Coefficient layout: [beta (p) | u (m)], where m = N, or m = N - 1 when
/// lambda = 0 (the first cluster is the reference level and has no column).
class ClusterDesign final : public LpDesign {
 public:
  ClusterDesign(const MatrixXd& X, std::vector<Index> cluster_of_obs, Index n_clusters,
                double lambda);

  Index rows() const override;
  Index cols() const override { return p_ + m_; }
  VectorXd multiply(const VectorXd& b) const override;
  VectorXd multiply_transpose(const VectorXd& v) const override;
  bool factor(const VectorXd& theta) override;
  VectorXd solve(const VectorXd& rhs) const override;
  VectorXd row(Index r) const override;

  Index n_indicator_columns() const { return m_; }
  /// Column (relative to the u block) of cluster k, or -1 for the reference.
  Index indicator_of(Index k) const { return reference_ ? k - 1 : k; }

 private:
  Index n_obs() const { return X_.rows(); }

  const MatrixXd& X_;
  std::vector<Index> cluster_;
  Index n_clusters_;
  double lambda_;
  bool reference_;
  Index p_;
  Index m_;
  // Block-arrow factorization: [A B; B' diag(d)].
  MatrixXd B_;
  VectorXd d_;
  Eigen::LDLT<MatrixXd> schur_;
};

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct LpOptions {
  int max_iterations = 200;
  /// Duality gap tolerance, relative to 1 + objective.
  double gap_tolerance = 1e-8;
  double step_factor = 0.99995;
  /// Move the interior solution to an optimal vertex when one is found.
  bool polish = true;
};

struct LpResult {
  VectorXd coef;
  VectorXd residuals;
  double objective = 0.0;
  int iterations = 0;
  double gap = 0.0;
  bool vertex = false;
};

/// Minimizes sum_r rho_tau(y_r - d_r'b) by a bounded-variable primal-dual
/// interior-point method (Frisch-Newton with Mehrotra predictor-corrector)
/// on the dual LP  max y'a  s.t.  D'a = (1 - tau) D'1,  0 <= a <= 1.
LpResult solve_check_loss(LpDesign& design, const VectorXd& y, double tau,
                          const LpOptions& options = {});

}  // namespace cqr
