#include <algorithm>
#include <cmath>
#include <limits>

#include "cqr/error.hpp"
#include "cqr/estimators.hpp"
#include "cqr/lp.hpp"

namespace cqr {

PenaltySpec PenaltySpec::fixed(PenaltyKind kind, double lambda) {
  PenaltySpec s;
  s.kind = kind;
  s.lambda = lambda;
  return s;
}

PenaltySpec PenaltySpec::cv(PenaltyKind kind, std::vector<double> grid, int folds) {
  PenaltySpec s;
  s.kind = kind;
  s.cross_validate = true;
  s.grid = std::move(grid);
  s.folds = folds;
  return s;
}

namespace {

struct Solution {
  FixedEffects beta;
  VectorXd u;  // one per cluster of the dataset passed in
  double check_loss = 0.0;
  double penalty = 0.0;
  int iterations = 0;
};

void require_intercept_only(const ClusteredDataset& data) {
  if (!data.random_intercept_only())
    throw Error(ErrorCode::unsupported, "penalized estimators cover cluster intercepts only");
}

VectorXd stacked_residuals(const ClusteredDataset& data, const FixedEffects& beta,
                           const VectorXd& u) {
  VectorXd r = data.y() - data.X() * beta;
  for (Index i = 0; i < data.n_clusters(); ++i)
    r.segment(data.offset(i), data.size(i)).array() -= u(i);
  return r;
}

double sum_check(const VectorXd& r, double tau) {
  double total = 0.0;
  for (Index i = 0; i < r.size(); ++i) total += r(i) < 0.0 ? (tau - 1.0) * r(i) : tau * r(i);
  return total;
}

Solution solve_l1(const ClusteredDataset& data, double tau, double lambda) {
  const Index N = data.n_clusters(), p = data.p();
  ClusterDesign design(data.X(), data.cluster_of_obs(), N, lambda);
  VectorXd y = VectorXd::Zero(design.rows());
  y.head(data.n_obs()) = data.y();
  LpOptions lp;
  lp.polish = false;
  const LpResult res = solve_check_loss(design, y, tau, lp);
  Solution s;
  s.beta = res.coef.head(p);
  s.u = VectorXd::Zero(N);
  for (Index k = 0; k < N; ++k) {
    const Index c = design.indicator_of(k);
    if (c >= 0) s.u(k) = res.coef(p + c);
  }
  s.check_loss = sum_check(stacked_residuals(data, s.beta, s.u), tau);
  s.penalty = lambda * s.u.cwiseAbs().sum();
  s.iterations = res.iterations;
  return s;
}

// Exact solution of the quadratic program
//   min sum rho_tau(e) + lambda |u|^2  s.t.  X beta + u_cluster + e = y
// by a primal-dual Mehrotra predictor-corrector method. With e = e+ - e-,
// the multiplier a of the equality lies in [tau - 1, tau]; the Newton system
// reduces to (D' Theta D + H) dc = rhs with H = 2 lambda on the u block,
// which is the bordered system ClusterDesign already factors when its
// auxiliary rows carry weight 1 / lambda.
Solution solve_l2(const ClusteredDataset& data, double tau, double lambda) {
  const Index N = data.n_clusters(), p = data.p(), n = data.n_obs();
  if (lambda <= 0.0) return solve_l1(data, tau, 0.0);
  ClusterDesign design(data.X(), data.cluster_of_obs(), N, lambda);
  const Index rows = design.rows(), k = design.cols();
  const VectorXd& y = data.y();

  VectorXd theta_aug = VectorXd::Constant(rows, 1.0 / lambda);
  auto factor = [&](const VectorXd& theta) {
    theta_aug.head(n) = theta;
    if (!design.factor(theta_aug)) throw NumericalError(-1, "l2-penalized system is singular");
  };
  auto D = [&](const VectorXd& c) -> VectorXd { return design.multiply(c).head(n); };
  auto Dt = [&](const VectorXd& v) {
    VectorXd v_aug = VectorXd::Zero(rows);
    v_aug.head(n) = v;
    return design.multiply_transpose(v_aug);
  };
  auto H = [&](const VectorXd& c) {
    VectorXd out = VectorXd::Zero(k);
    out.tail(N) = 2.0 * lambda * c.tail(N);
    return out;
  };

  // Ridge start.
  factor(VectorXd::Ones(n));
  VectorXd c = design.solve(Dt(y));
  VectorXd r = y - D(c);
  const double shift = std::max(1e-3, 1e-2 * r.cwiseAbs().mean());
  VectorXd ep = r.cwiseMax(0.0).array() + shift;
  VectorXd em = (-r).cwiseMax(0.0).array() + shift;
  VectorXd a = VectorXd::Constant(n, tau - 0.5);

  auto step = [](const VectorXd& v, const VectorXd& dv) {
    double alpha = 1.0;
    for (Index i = 0; i < v.size(); ++i)
      if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    return alpha;
  };
  const double y_scale = 1.0 + y.cwiseAbs().maxCoeff();
  const double nd = static_cast<double>(n);
  // Once the gap has collapsed, round-off in the extreme-weight solves can
  // push the residuals back up; keep the best iterate seen.
  Solution best;
  double best_error = std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= 200; ++iter) {
    const VectorXd z = tau - a.array();
    const VectorXd w = 1.0 - tau + a.array();
    const VectorXd rp = y - D(c) - ep + em;
    const VectorXd rd = Dt(a) - H(c);
    const double gap = ep.dot(z) + em.dot(w);
    Solution s;
    s.beta = c.head(p);
    s.u = c.tail(N);
    s.check_loss = sum_check(stacked_residuals(data, s.beta, s.u), tau);
    s.penalty = lambda * s.u.squaredNorm();
    s.iterations = iter - 1;
    const double rel_gap = gap / (1.0 + s.check_loss + s.penalty);
    const double infeasibility =
        std::max(rp.lpNorm<Eigen::Infinity>(), rd.lpNorm<Eigen::Infinity>()) / y_scale;
    if (rel_gap <= 1e-9 && infeasibility <= 1e-9) return s;
    const double error = std::max(rel_gap, infeasibility);
    if (error < best_error) {
      best = s;
      best_error = error;
    }

    const VectorXd theta = (ep.cwiseQuotient(z) + em.cwiseQuotient(w)).cwiseInverse();
    if (!theta.allFinite()) break;
    theta_aug.head(n) = theta;
    if (!design.factor(theta_aug)) break;

    auto direction = [&](const VectorXd& rc_p, const VectorXd& rc_m, VectorXd& dc, VectorXd& da,
                         VectorXd& dep, VectorXd& dem) {
      const VectorXd q = rp - rc_p.cwiseQuotient(z) + rc_m.cwiseQuotient(w);
      dc = design.solve(Dt(theta.cwiseProduct(q)) + rd);
      da = theta.cwiseProduct(q - D(dc));
      dep = (rc_p + ep.cwiseProduct(da)).cwiseQuotient(z);
      dem = (rc_m - em.cwiseProduct(da)).cwiseQuotient(w);
    };
    auto max_step = [&](const VectorXd& da, const VectorXd& dep, const VectorXd& dem) {
      return std::min({step(ep, dep), step(em, dem), step(z, -da), step(w, da)});
    };

    // Predictor.
    VectorXd dc, da, dep, dem;
    direction(-ep.cwiseProduct(z), -em.cwiseProduct(w), dc, da, dep, dem);
    const double alpha_aff = max_step(da, dep, dem);
    const double mu = gap / (2.0 * nd);
    const double gap_aff = (ep + alpha_aff * dep).dot(z - alpha_aff * da) +
                           (em + alpha_aff * dem).dot(w + alpha_aff * da);
    const double sigma = std::pow(gap_aff / gap, 3);

    // Corrector.
    const VectorXd rc_p =
        (sigma * mu - (ep.cwiseProduct(z)).array() + (dep.cwiseProduct(da)).array()).matrix();
    const VectorXd rc_m =
        (sigma * mu - (em.cwiseProduct(w)).array() - (dem.cwiseProduct(da)).array()).matrix();
    direction(rc_p, rc_m, dc, da, dep, dem);
    const double alpha = std::min(1.0, 0.99995 * max_step(da, dep, dem));
    if (!(alpha > 0.0) || !dc.allFinite()) break;
    c += alpha * dc;
    a += alpha * da;
    ep += alpha * dep;
    em += alpha * dem;
  }
  // Near the optimum the weights become extreme; accept a slightly looser
  // point rather than fail on an ill-conditioned final factorization.
  if (best_error <= 1e-7) return best;
  throw Error(ErrorCode::solver, "l2-penalized interior-point method did not converge");
}

Solution solve_penalized(const ClusteredDataset& data, double tau, PenaltyKind kind,
                         double lambda) {
  return kind == PenaltyKind::l1 ? solve_l1(data, tau, lambda) : solve_l2(data, tau, lambda);
}

}  // namespace

std::vector<double> default_lambda_grid(const ClusteredDataset& data, QuantileLevel tau) {
  QrOptions quiet;
  quiet.compute_se = false;
  const QrFit marginal = fit_marginal(data, tau, quiet);
  std::vector<double> r(marginal.residuals.data(),
                        marginal.residuals.data() + marginal.residuals.size());
  auto median = [](std::vector<double> v) {
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(m), v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(m));
    return 0.5 * (lo + hi);
  };
  const double med = median(r);
  for (double& v : r) v = std::abs(v - med);
  double s = 1.4826 * median(r);
  if (!(s > 0.0)) s = 1.0;
  std::vector<double> grid(20);
  const double lo = std::log(0.01 * s), hi = std::log(10.0 * s);
  for (int k = 0; k < 20; ++k) grid[static_cast<std::size_t>(k)] = std::exp(lo + (hi - lo) * k / 19.0);
  return grid;
}

std::vector<double> cross_validation_scores(const ClusteredDataset& input, QuantileLevel tau,
                                            PenaltyKind kind, const std::vector<double>& grid,
                                            int folds) {
  require_intercept_only(input);
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "lambda grid is empty");
  if (folds < 2) throw Error(ErrorCode::invalid_argument, "cross-validation needs two folds");
  const ClusteredDataset data = input.take_clusters(input.canonical_order());
  const Index N = data.n_clusters();

  std::vector<double> totals(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> present;
    std::vector<std::vector<Index>> train;
    std::vector<Index> slot(static_cast<std::size_t>(N), -1);
    bool any_held_out = false;
    for (Index i = 0; i < N; ++i) {
      std::vector<Index> rows;
      for (Index j = 0; j < data.size(i); ++j) {
        if (cv_fold(i, j, folds) != f)
          rows.push_back(j);
        else
          any_held_out = true;
      }
      if (!rows.empty()) {
        slot[static_cast<std::size_t>(i)] = static_cast<Index>(present.size());
        present.push_back(i);
        train.push_back(std::move(rows));
      }
    }
    if (!any_held_out) continue;
    const ClusteredDataset fold_train = data.take_clusters(present).select_rows(train);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const Solution s = solve_penalized(fold_train, tau, kind, grid[g]);
      for (Index i = 0; i < N; ++i) {
        const Index at = slot[static_cast<std::size_t>(i)];
        const double u = at >= 0 ? s.u(at) : 0.0;
        for (Index j = 0; j < data.size(i); ++j) {
          if (cv_fold(i, j, folds) != f) continue;
          const Index r = data.offset(i) + j;
          const double resid = data.y()(r) - data.X().row(r).dot(s.beta) - u;
          totals[g] += resid < 0.0 ? (tau - 1.0) * resid : tau * resid;
        }
      }
    }
  }
  for (double& t : totals) t /= static_cast<double>(data.n_obs());
  return totals;
}

double select_lambda(const std::vector<double>& sorted_grid, const std::vector<double>& scores) {
  if (sorted_grid.empty() || sorted_grid.size() != scores.size())
    throw Error(ErrorCode::invalid_argument, "one score per grid value is required");
  double best = std::numeric_limits<double>::infinity();
  double chosen = sorted_grid.front();
  for (std::size_t g = 0; g < sorted_grid.size(); ++g) {
    if (scores[g] <= best) {
      best = scores[g];
      chosen = sorted_grid[g];
    }
  }
  return chosen;
}

double cross_validate_lambda(const ClusteredDataset& data, QuantileLevel tau,
                             const PenaltySpec& spec) {
  std::vector<double> grid = spec.grid.empty() ? default_lambda_grid(data, tau) : spec.grid;
  for (double l : grid)
    if (!(l > 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::invalid_argument, "cross-validation grid values must be positive");
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return grid.front();
  return select_lambda(grid, cross_validation_scores(data, tau, spec.kind, grid, spec.folds));
}

PenalizedFit fit_penalized(const ClusteredDataset& input, QuantileLevel tau,
                           const PenaltySpec& spec) {
  require_intercept_only(input);
  double lambda = spec.lambda;
  if (spec.cross_validate) {
    lambda = cross_validate_lambda(input, tau, spec);
  } else if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::invalid_argument, "penalty must be a finite nonnegative number");
  }
  const std::vector<Index> order = input.canonical_order();
  const ClusteredDataset data = input.take_clusters(order);
  const Solution s = solve_penalized(data, tau, spec.kind, lambda);

  PenalizedFit fit;
  fit.beta = s.beta;
  fit.u.resize(input.n_clusters());
  for (std::size_t k = 0; k < order.size(); ++k) fit.u(order[k]) = s.u(static_cast<Index>(k));
  fit.lambda = lambda;
  fit.check_loss = s.check_loss;
  fit.objective = s.check_loss + s.penalty;
  fit.iterations = s.iterations;
  return fit;
}

}  // namespace cqr
