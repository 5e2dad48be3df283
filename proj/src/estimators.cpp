#include "cqr/estimators.hpp"

#include <algorithm>
#include <numeric>

#include "cqr/error.hpp"

namespace cqr {

namespace {

// Clusters in canonical order plus the map back to input positions. Fitting
// on the canonical arrangement makes every estimator exactly invariant to
// the order in which clusters were supplied.
struct Canonical {
  std::vector<Index> order;
  ClusteredDataset data;

  explicit Canonical(const ClusteredDataset& input)
      : order(input.canonical_order()), data(input.take_clusters(order)) {}

  // Per-observation vector in canonical layout -> input layout.
  VectorXd to_input(const VectorXd& v, const ClusteredDataset& input) const {
    VectorXd out(v.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Index i = order[k];
      out.segment(input.offset(i), input.size(i)) =
          v.segment(data.offset(static_cast<Index>(k)), input.size(i));
    }
    return out;
  }

  // Per-cluster rows in input layout -> canonical layout.
  MatrixXd rows_to_canonical(const MatrixXd& m) const {
    MatrixXd out(m.rows(), m.cols());
    for (std::size_t k = 0; k < order.size(); ++k) out.row(static_cast<Index>(k)) = m.row(order[k]);
    return out;
  }
};

QrFit fit_canonical(const Canonical& c, const ClusteredDataset& input, const VectorXd& offset,
                    QuantileLevel tau, const QrOptions& options) {
  QrFit fit = fit_qr(c.data.y(), c.data.X(), tau, offset, options);
  fit.residuals = c.to_input(fit.residuals, input);
  return fit;
}

}  // namespace

// ---------------------------------------------------------------------------
// Oracle, marginal, Canay
// ---------------------------------------------------------------------------

QrFit fit_oracle(const ClusteredDataset& data, const RandomEffects& u_true, QuantileLevel tau,
                 const QrOptions& options) {
  if (u_true.rows() != data.n_clusters() || u_true.cols() != data.q())
    throw Error(ErrorCode::invalid_argument, "true random effects must be N x q");
  const Canonical c(data);
  return fit_canonical(c, data, c.data.offsets_from(c.rows_to_canonical(u_true)), tau, options);
}

QrFit fit_marginal(const ClusteredDataset& data, QuantileLevel tau, const QrOptions& options) {
  const Canonical c(data);
  return fit_canonical(c, data, VectorXd::Zero(data.n_obs()), tau, options);
}

VectorXd canay_offsets(const ClusteredDataset& data) {
  if (!data.random_intercept_only())
    throw Error(ErrorCode::unsupported, "Canay's estimator allows cluster-specific intercepts only");
  const Index N = data.n_clusters(), p = data.p();
  VectorXd y_dm(data.n_obs());
  MatrixXd x_dm(data.n_obs(), p - 1);
  for (Index i = 0; i < N; ++i) {
    const Index off = data.offset(i), n_i = data.size(i);
    y_dm.segment(off, n_i) = data.y_block(i).array() - data.y_block(i).mean();
    for (Index c = 1; c < p; ++c) {
      const auto col = data.X().col(c).segment(off, n_i);
      x_dm.col(c - 1).segment(off, n_i) = col.array() - col.mean();
    }
  }
  VectorXd slopes = VectorXd::Zero(p - 1);
  if (p > 1) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x_dm);
    qr.setThreshold(1e-10);
    if (qr.rank() < p - 1)
      throw Error(ErrorCode::singular_design,
                  "within-cluster design is rank deficient; a covariate is constant within clusters");
    slopes = qr.solve(y_dm);
  }
  VectorXd u(N);
  for (Index i = 0; i < N; ++i) {
    const VectorXd fitted = data.X_block(i).rightCols(p - 1) * slopes;
    u(i) = (data.y_block(i) - fitted).mean();
  }
  double total = 0.0;
  for (Index i = 0; i < N; ++i) total += u(i);
  return u.array() - total / static_cast<double>(N);
}

QrFit fit_canay(const ClusteredDataset& data, QuantileLevel tau, const QrOptions& options) {
  const Canonical c(data);
  const VectorXd u = canay_offsets(c.data);
  return fit_canonical(c, data, c.data.offsets_from(u), tau, options);
}

// ---------------------------------------------------------------------------
// Two-step estimator
// ---------------------------------------------------------------------------

TwoStepFit twostep_with_effects(const ClusteredDataset& data, QuantileLevel tau,
                                const RandomEffects& u, bool compute_se) {
  if (u.rows() != data.n_clusters() || u.cols() != data.q())
    throw Error(ErrorCode::invalid_argument, "random effects must be N x q");
  QrOptions options;
  options.compute_se = compute_se;
  const Canonical c(data);
  const QrFit qr = fit_canonical(c, data, c.data.offsets_from(c.rows_to_canonical(u)), tau, options);
  TwoStepFit fit;
  fit.beta = qr.beta;
  fit.blp = u;
  fit.se_obs = qr.se;
  fit.cov = qr.cov;
  fit.residuals = qr.residuals;
  fit.objective = qr.objective;
  return fit;
}

TwoStepFit fit_twostep(const ClusteredDataset& data, QuantileLevel tau,
                       const TwoStepOptions& options) {
  LqmmFit lqmm = fit_lqmm(data, tau, options.lqmm);
  TwoStepFit fit = twostep_with_effects(data, tau, lqmm.blp, options.compute_se);
  fit.converged = lqmm.converged;
  fit.lqmm = std::move(lqmm);
  return fit;
}

// ---------------------------------------------------------------------------
// Half-panel jackknife
// ---------------------------------------------------------------------------

std::pair<std::vector<std::vector<Index>>, std::vector<std::vector<Index>>> half_split(
    const ClusteredDataset& data, Rng& rng) {
  const Index N = data.n_clusters();
  std::vector<std::vector<Index>> first(static_cast<std::size_t>(N)),
      second(static_cast<std::size_t>(N));
  // Draw in canonical order so the split a cluster receives does not depend
  // on its position in the input.
  for (Index i : data.canonical_order()) {
    const Index n_i = data.size(i);
    if (n_i < 2)
      throw Error(ErrorCode::unsupported, "half-panel jackknife needs at least two rows per cluster");
    std::vector<Index> rows(static_cast<std::size_t>(n_i));
    std::iota(rows.begin(), rows.end(), Index{0});
    for (Index k = n_i - 1; k > 0; --k)
      std::swap(rows[static_cast<std::size_t>(k)],
                rows[static_cast<std::size_t>(rng.uniform_index(k + 1))]);
    Index h = n_i / 2;
    if (n_i % 2 == 1 && rng.bernoulli(0.5)) ++h;
    auto& a = first[static_cast<std::size_t>(i)];
    auto& b = second[static_cast<std::size_t>(i)];
    a.assign(rows.begin(), rows.begin() + h);
    b.assign(rows.begin() + h, rows.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
  }
  return {std::move(first), std::move(second)};
}

FixedEffects jackknife_adjust(const ClusteredDataset& data, const BaseEstimator& base, Rng& rng) {
  const auto [first, second] = half_split(data, rng);
  const FixedEffects full = base(data);
  const FixedEffects b1 = base(data.select_rows(first));
  const FixedEffects b2 = base(data.select_rows(second));
  return 2.0 * full - 0.5 * (b1 + b2);
}

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

namespace {

constexpr std::pair<EstimatorKind, const char*> kEstimatorNames[] = {
    {EstimatorKind::oracle, "oracle"},   {EstimatorKind::marginal, "marg"},
    {EstimatorKind::canay, "canay"},     {EstimatorKind::l1pen, "l1pen"},
    {EstimatorKind::l2pen, "l2pen"},     {EstimatorKind::lqmm, "lqmm"},
    {EstimatorKind::jackknife, "jk"},    {EstimatorKind::twostep, "twostep"},
    {EstimatorKind::adjusted, "adj"},
};

}  // namespace

const char* estimator_name(EstimatorKind kind) {
  for (const auto& [k, name] : kEstimatorNames)
    if (k == kind) return name;
  return "unknown";
}

EstimatorKind parse_estimator(const std::string& name) {
  for (const auto& [k, n] : kEstimatorNames)
    if (name == n) return k;
  throw Error(ErrorCode::config, "unknown estimator '" + name + "'");
}

}  // namespace cqr
