#include "cqr/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cqr/error.hpp"

namespace cqr {

// ---------------------------------------------------------------------------
// DenseDesign
// ---------------------------------------------------------------------------

namespace {

// LDLT of a matrix that is positive definite in exact arithmetic. Near the
// optimum the weights span many orders of magnitude and rounding can push a
// pivot to zero; a diagonal jitter of growing size restores definiteness.
bool factor_spd(MatrixXd M, Eigen::LDLT<MatrixXd>& ldlt) {
  const double scale = std::max(M.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    if (jitter > 0.0) M.diagonal().array() += jitter;
    ldlt.compute(M);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all() &&
        ldlt.vectorD().minCoeff() > 1e-300)
      return true;
    jitter = jitter == 0.0 ? 1e-14 * scale : jitter * 100.0;
  }
  return false;
}

}  // namespace

bool DenseDesign::factor(const VectorXd& theta) {
  return factor_spd(X_.transpose() * theta.asDiagonal() * X_, ldlt_);
}

VectorXd DenseDesign::solve(const VectorXd& rhs) const { return ldlt_.solve(rhs); }

// ---------------------------------------------------------------------------
// ClusterDesign
// ---------------------------------------------------------------------------

ClusterDesign::ClusterDesign(const MatrixXd& X, std::vector<Index> cluster_of_obs,
                             Index n_clusters, double lambda)
    : X_(X),
      cluster_(std::move(cluster_of_obs)),
      n_clusters_(n_clusters),
      lambda_(lambda),
      reference_(lambda == 0.0),
      p_(X.cols()),
      m_(lambda == 0.0 ? n_clusters - 1 : n_clusters) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::invalid_argument, "penalty must be a finite nonnegative number");
  if (static_cast<Index>(cluster_.size()) != X.rows())
    throw Error(ErrorCode::invalid_argument, "one cluster index per row is required");
}

Index ClusterDesign::rows() const { return n_obs() + (reference_ ? 0 : 2 * n_clusters_); }

VectorXd ClusterDesign::multiply(const VectorXd& b) const {
  VectorXd out(rows());
  out.head(n_obs()).noalias() = X_ * b.head(p_);
  for (Index r = 0; r < n_obs(); ++r) {
    const Index c = indicator_of(cluster_[static_cast<std::size_t>(r)]);
    if (c >= 0) out(r) += b(p_ + c);
  }
  if (!reference_) {
    out.segment(n_obs(), n_clusters_) = lambda_ * b.tail(m_);
    out.tail(n_clusters_) = -lambda_ * b.tail(m_);
  }
  return out;
}

VectorXd ClusterDesign::multiply_transpose(const VectorXd& v) const {
  VectorXd out = VectorXd::Zero(cols());
  out.head(p_).noalias() = X_.transpose() * v.head(n_obs());
  for (Index r = 0; r < n_obs(); ++r) {
    const Index c = indicator_of(cluster_[static_cast<std::size_t>(r)]);
    if (c >= 0) out(p_ + c) += v(r);
  }
  if (!reference_)
    out.tail(m_) += lambda_ * (v.segment(n_obs(), n_clusters_) - v.tail(n_clusters_));
  return out;
}

bool ClusterDesign::factor(const VectorXd& theta) {
  const VectorXd t = theta.head(n_obs());
  MatrixXd A = X_.transpose() * t.asDiagonal() * X_;
  B_ = MatrixXd::Zero(p_, m_);
  d_ = VectorXd::Zero(m_);
  for (Index r = 0; r < n_obs(); ++r) {
    const Index c = indicator_of(cluster_[static_cast<std::size_t>(r)]);
    if (c < 0) continue;
    B_.col(c) += t(r) * X_.row(r).transpose();
    d_(c) += t(r);
  }
  if (!reference_) {
    d_ += lambda_ * lambda_ *
          (theta.segment(n_obs(), n_clusters_) + theta.tail(n_clusters_));
  }
  if (!(d_.array() > 0.0).all()) return false;
  const MatrixXd BDinv = B_ * d_.cwiseInverse().asDiagonal();
  return factor_spd(A - BDinv * B_.transpose(), schur_);
}

VectorXd ClusterDesign::solve(const VectorXd& rhs) const {
  const VectorXd r1 = rhs.head(p_);
  const VectorXd r2 = rhs.tail(m_);
  const VectorXd dinv_r2 = r2.cwiseQuotient(d_);
  VectorXd out(cols());
  out.head(p_) = schur_.solve(r1 - B_ * dinv_r2);
  out.tail(m_) = dinv_r2 - (B_.transpose() * out.head(p_)).cwiseQuotient(d_);
  return out;
}

VectorXd ClusterDesign::row(Index r) const {
  VectorXd out = VectorXd::Zero(cols());
  if (r < n_obs()) {
    out.head(p_) = X_.row(r).transpose();
    const Index c = indicator_of(cluster_[static_cast<std::size_t>(r)]);
    if (c >= 0) out(p_ + c) = 1.0;
  } else if (r < n_obs() + n_clusters_) {
    out(p_ + (r - n_obs())) = lambda_;
  } else {
    out(p_ + (r - n_obs() - n_clusters_)) = -lambda_;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interior-point method
// ---------------------------------------------------------------------------

namespace {

double check_sum(const VectorXd& r, double tau) {
  double total = 0.0;
  for (Index i = 0; i < r.size(); ++i) total += r(i) < 0.0 ? (tau - 1.0) * r(i) : tau * r(i);
  return total;
}

// Largest alpha in [0, 1] keeping v + alpha dv >= 0, scaled by `factor`.
double step_to_boundary(const VectorXd& v, const VectorXd& dv, double factor) {
  double alpha = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  return std::min(1.0, factor * alpha);
}

struct Vertex {
  VectorXd coef;
  VectorXd residuals;
  double objective = 0.0;
  bool certified = false;
};

// Interpolates the cols() rows with the smallest absolute residuals that
// form a nonsingular basis, then checks the subgradient optimality condition.
bool polish_vertex(const LpDesign& design, const VectorXd& y, double tau,
                   const VectorXd& residuals, Vertex& out) {
  const Index n = design.rows(), k = design.cols();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(residuals(a)) < std::abs(residuals(b));
  });

  MatrixXd basis_rows(k, k);
  MatrixXd ortho(k, k);
  std::vector<Index> basis;
  for (Index r : order) {
    if (static_cast<Index>(basis.size()) == k) break;
    const VectorXd d = design.row(r);
    VectorXd v = d;
    const Index m = static_cast<Index>(basis.size());
    for (int pass = 0; pass < 2; ++pass)
      v -= ortho.leftCols(m) * (ortho.leftCols(m).transpose() * v);
    const double norm = v.norm();
    if (norm <= 1e-9 * std::max(1.0, d.norm())) continue;
    ortho.col(m) = v / norm;
    basis_rows.row(m) = d.transpose();
    basis.push_back(r);
  }
  if (static_cast<Index>(basis.size()) < k) return false;

  VectorXd yb(k);
  for (Index j = 0; j < k; ++j) yb(j) = y(basis[static_cast<std::size_t>(j)]);
  Eigen::FullPivLU<MatrixXd> lu(basis_rows);
  if (!lu.isInvertible()) return false;
  out.coef = lu.solve(yb);
  out.residuals = y - design.multiply(out.coef);
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (Index r : basis) {
    in_basis[static_cast<std::size_t>(r)] = 1;
    out.residuals(r) = 0.0;
  }
  out.objective = check_sum(out.residuals, tau);

  // Subgradient certificate; skipped under ties outside the basis.
  VectorXd g = VectorXd::Zero(n);
  for (Index r = 0; r < n; ++r) {
    if (in_basis[static_cast<std::size_t>(r)]) continue;
    if (out.residuals(r) == 0.0) {
      out.certified = false;
      return true;
    }
    g(r) = out.residuals(r) > 0.0 ? tau : tau - 1.0;
  }
  const MatrixXd basis_t = basis_rows.transpose();
  const VectorXd a = -Eigen::FullPivLU<MatrixXd>(basis_t).solve(design.multiply_transpose(g));
  const double slack = 1e-9;
  out.certified = ((a.array() >= tau - 1.0 - slack) && (a.array() <= tau + slack)).all();
  return true;
}

}  // namespace

LpResult solve_check_loss(LpDesign& design, const VectorXd& y, double tau,
                          const LpOptions& options) {
  const Index n = design.rows();
  const Index k = design.cols();
  if (y.size() != n) throw Error(ErrorCode::invalid_argument, "response length mismatch");
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorCode::invalid_argument, "quantile level must lie in (0, 1)");
  if (n < k) throw Error(ErrorCode::precondition, "fewer observations than coefficients");

  // Least-squares start for the dual variables.
  if (!design.factor(VectorXd::Ones(n)))
    throw Error(ErrorCode::singular_design, "design matrix is rank deficient");
  VectorXd coef = design.solve(design.multiply_transpose(y));
  if (!coef.allFinite()) throw Error(ErrorCode::singular_design, "design matrix is rank deficient");

  // Primal a in [0,1] with slack s = 1 - a; dual multipliers z, w >= 0 with
  // z - w = D coef - y (dual feasibility for dual vector -coef).
  VectorXd x = VectorXd::Constant(n, 1.0 - tau);
  VectorXd s = VectorXd::Constant(n, tau);
  VectorXd r = design.multiply(coef) - y;
  const double shift = std::max(1e-3, 1e-2 * r.cwiseAbs().mean());
  VectorXd z = r.cwiseMax(0.0).array() + shift;
  VectorXd w = (-r).cwiseMax(0.0).array() + shift;

  // The tolerance is relative to the size of the objective.
  auto gap_of = [&] { return x.dot(z) + s.dot(w); };
  auto tolerance = [&] {
    return options.gap_tolerance * (1.0 + check_sum(y - design.multiply(coef), tau));
  };
  double gap = gap_of();
  int it = 0;
  const double eta = options.step_factor;
  while (gap > tolerance() && it < options.max_iterations) {
    ++it;
    const VectorXd xinv = x.cwiseInverse();
    const VectorXd sinv = s.cwiseInverse();
    const VectorXd theta = (z.cwiseProduct(xinv) + w.cwiseProduct(sinv)).cwiseInverse();
    if (!theta.allFinite() || !design.factor(theta)) break;
    const VectorXd rz = z - w;

    // Predictor (affine scaling).
    VectorXd rhs = theta.cwiseProduct(rz);
    VectorXd dy = design.solve(design.multiply_transpose(rhs));
    VectorXd dx = theta.cwiseProduct(design.multiply(dy) - rz);
    VectorXd ds = -dx;
    VectorXd dz = -(z.array() * (dx.array() * xinv.array() + 1.0)).matrix();
    VectorXd dw = -(w.array() * (ds.array() * sinv.array() + 1.0)).matrix();
    double ap = std::min(step_to_boundary(x, dx, eta), step_to_boundary(s, ds, eta));
    double ad = std::min(step_to_boundary(z, dz, eta), step_to_boundary(w, dw, eta));

    if (std::min(ap, ad) < 1.0) {
      // Corrector with Mehrotra centering.
      const double mu_now = gap;
      const double g = (x + ap * dx).dot(z + ad * dz) + (s + ap * ds).dot(w + ad * dw);
      const double mu = mu_now * std::pow(g / mu_now, 3) / (2.0 * static_cast<double>(n));
      const VectorXd dxdz = dx.cwiseProduct(dz);
      const VectorXd dsdw = ds.cwiseProduct(dw);
      const VectorXd xi = mu * (xinv - sinv);
      const VectorXd rt = rz + dxdz.cwiseProduct(xinv) - dsdw.cwiseProduct(sinv);
      rhs = theta.cwiseProduct(rt - xi);
      dy = design.solve(design.multiply_transpose(rhs));
      dx = theta.cwiseProduct(design.multiply(dy) + xi - rt);
      ds = -dx;
      dz = (mu * xinv - z - xinv.cwiseProduct(z.cwiseProduct(dx) + dxdz));
      dw = (mu * sinv - w - sinv.cwiseProduct(w.cwiseProduct(ds) + dsdw));
      ap = std::min(step_to_boundary(x, dx, eta), step_to_boundary(s, ds, eta));
      ad = std::min(step_to_boundary(z, dz, eta), step_to_boundary(w, dw, eta));
    }
    if (!(dx.allFinite() && dy.allFinite() && dz.allFinite() && dw.allFinite())) break;
    if (ap <= 0.0 && ad <= 0.0) break;

    x += ap * dx;
    s += ap * ds;
    coef -= ad * dy;  // dual vector is -coef
    z += ad * dz;
    w += ad * dw;
    gap = gap_of();
    if (!std::isfinite(gap)) break;
  }
  const bool converged = std::isfinite(gap) && gap <= tolerance();

  LpResult result;
  result.iterations = it;
  result.gap = gap;
  result.coef = coef;
  result.residuals = y - design.multiply(coef);
  result.objective = check_sum(result.residuals, tau);

  if (options.polish && coef.allFinite()) {
    Vertex v;
    if (polish_vertex(design, y, tau, result.residuals, v)) {
      const double slack = 1e-10 * (1.0 + std::abs(result.objective));
      if (v.certified || (converged && v.objective <= result.objective + slack)) {
        result.coef = std::move(v.coef);
        result.residuals = std::move(v.residuals);
        result.objective = v.objective;
        result.vertex = true;
        if (v.certified) return result;
      }
    }
  }
  if (!converged || !result.coef.allFinite())
    throw SolverError(it, gap, "interior-point method did not reach the gap tolerance");
  return result;
}

}  // namespace cqr
