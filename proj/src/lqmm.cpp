#include "cqr/lqmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cqr/error.hpp"
#include "cqr/nelder_mead.hpp"
#include "cqr/qr.hpp"

namespace cqr {

namespace {

constexpr double kScaleFloor = 1e-6;

inline double rho(double v, double tau) { return v < 0.0 ? (tau - 1.0) * v : tau * v; }

void check_scale(const ReScale& s, Index q) {
  if (s.chol.rows() != q || s.chol.cols() != q)
    throw Error(ErrorCode::invalid_argument, "random-effect scale must be q x q");
  if (!s.chol.allFinite())
    throw Error(ErrorCode::invalid_argument, "random-effect scale is not finite");
}

// Per-cluster log-likelihood terms at every quadrature node.
class NodeLikelihood {
 public:
  NodeLikelihood(const ClusteredDataset& data, double tau, int nK)
      : data_(data), tau_(tau) {
    if (data.q() > 2)
      throw Error(ErrorCode::unsupported, "tensor quadrature supports at most two random effects");
    rule_ = tensor_rule(gauss_hermite(nK), static_cast<int>(data.q()));
  }

  Index n_nodes() const { return rule_.nodes.rows(); }
  const TensorRule& rule() const { return rule_; }

  // Node offsets L v_g, one column per node (q x G).
  MatrixXd node_effects(const ReScale& s) const { return s.chol * rule_.nodes.transpose(); }

  // Fills terms(g) = log w_g + sum_j log f(y_ij | x'b + z'e_g) for cluster i.
  void cluster_terms(Index i, const VectorXd& resid, double sigma, const MatrixXd& effects,
                     VectorXd& terms) const {
    const Index n_i = data_.size(i), off = data_.offset(i), G = n_nodes();
    const double log_const = static_cast<double>(n_i) * std::log(tau_ * (1.0 - tau_) / sigma);
    const double inv_sigma = 1.0 / sigma;
    terms.resize(G);
    if (data_.random_intercept_only()) {
      for (Index g = 0; g < G; ++g) {
        const double e = effects(0, g);
        double loss = 0.0;
        for (Index j = 0; j < n_i; ++j) loss += rho((resid(off + j) - e) * inv_sigma, tau_);
        terms(g) = rule_.log_weights(g) + log_const - loss;
      }
      return;
    }
    const MatrixXd shifts = data_.Z_block(i) * effects;  // n_i x G
    for (Index g = 0; g < G; ++g) {
      double loss = 0.0;
      for (Index j = 0; j < n_i; ++j) loss += rho((resid(off + j) - shifts(j, g)) * inv_sigma, tau_);
      terms(g) = rule_.log_weights(g) + log_const - loss;
    }
  }

  // log-sum-exp per cluster; returns false on a non-finite cluster.
  bool loglik(const FixedEffects& beta, double sigma, const ReScale& s, VectorXd& out,
              Index& bad_cluster) const {
    const VectorXd resid = data_.y() - data_.X() * beta;
    const MatrixXd effects = node_effects(s);
    out.resize(data_.n_clusters());
    VectorXd terms;
    for (Index i = 0; i < data_.n_clusters(); ++i) {
      cluster_terms(i, resid, sigma, effects, terms);
      const double m = terms.maxCoeff();
      if (!std::isfinite(m)) {
        bad_cluster = i;
        return false;
      }
      out(i) = m + std::log((terms.array() - m).exp().sum());
      if (!std::isfinite(out(i))) {
        bad_cluster = i;
        return false;
      }
    }
    return true;
  }

 private:
  const ClusteredDataset& data_;
  double tau_;
  TensorRule rule_;
};

RandomEffects posterior_mean(const NodeLikelihood& like, const FixedEffects& beta, double sigma,
                             const ReScale& s, const ClusteredDataset& data) {
  const VectorXd resid = data.y() - data.X() * beta;
  const MatrixXd effects = like.node_effects(s);
  RandomEffects out(data.n_clusters(), data.q());
  VectorXd terms;
  for (Index i = 0; i < data.n_clusters(); ++i) {
    like.cluster_terms(i, resid, sigma, effects, terms);
    const double m = terms.maxCoeff();
    if (!std::isfinite(m)) throw NumericalError(i, "cluster likelihood vanished at every node");
    const VectorXd post = (terms.array() - m).exp();
    const double total = post.sum();
    out.row(i) = (effects * post / total).transpose();
    if (!out.row(i).allFinite()) throw NumericalError(i, "non-finite random-effect prediction");
  }
  return out;
}

RandomEffects linear_blp(const FixedEffects& beta, double sigma, const ReScale& s,
                         const ClusteredDataset& data, double tau) {
  const double mean = sigma * (1.0 - 2.0 * tau) / (tau * (1.0 - tau));
  const double var =
      sigma * sigma * (1.0 - 2.0 * tau + 2.0 * tau * tau) / (tau * tau * (1.0 - tau) * (1.0 - tau));
  const MatrixXd psi = s.covariance();
  const VectorXd resid = data.y() - data.X() * beta;
  RandomEffects out(data.n_clusters(), data.q());
  for (Index i = 0; i < data.n_clusters(); ++i) {
    const MatrixXd Zi = data.Z_block(i);
    MatrixXd V = Zi * psi * Zi.transpose();
    V.diagonal().array() += var;
    const VectorXd centered = resid.segment(data.offset(i), data.size(i)).array() - mean;
    out.row(i) = (psi * Zi.transpose() * V.ldlt().solve(centered)).transpose();
    if (!out.row(i).allFinite()) throw NumericalError(i, "non-finite random-effect prediction");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter packing: (beta, log sigma, log L_kk and raw L_kl for k > l).
// ---------------------------------------------------------------------------

double floored_exp(double v) { return std::max(std::exp(std::min(v, 700.0)), kScaleFloor); }

struct Unpacked {
  FixedEffects beta;
  double sigma;
  ReScale scale;
};

Unpacked unpack(const VectorXd& theta, Index p, Index q) {
  Unpacked u;
  u.beta = theta.head(p);
  u.sigma = floored_exp(theta(p));
  u.scale.chol = MatrixXd::Zero(q, q);
  Index at = p + 1;
  for (Index k = 0; k < q; ++k) {
    u.scale.chol(k, k) = floored_exp(theta(at++));
    for (Index l = 0; l < k; ++l) u.scale.chol(k, l) = theta(at++);
  }
  return u;
}

VectorXd pack(const FixedEffects& beta, double sigma, const ReScale& scale) {
  const Index p = beta.size(), q = scale.q();
  VectorXd theta(p + 1 + q * (q + 1) / 2);
  theta.head(p) = beta;
  theta(p) = std::log(std::max(sigma, kScaleFloor));
  Index at = p + 1;
  for (Index k = 0; k < q; ++k) {
    theta(at++) = std::log(std::max(scale.chol(k, k), kScaleFloor));
    for (Index l = 0; l < k; ++l) theta(at++) = scale.chol(k, l);
  }
  return theta;
}

double sample_sd(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

struct Start {
  FixedEffects beta;
  double sigma;
  ReScale scale;
  double resid_sd;
};

Start default_start(const ClusteredDataset& data, double tau) {
  QrOptions quiet;
  quiet.compute_se = false;
  const QrFit marginal = fit_qr(data.y(), data.X(), QuantileLevel(tau), quiet);
  Start s;
  s.beta = marginal.beta;
  s.sigma = marginal.objective / static_cast<double>(data.n_obs());
  if (s.sigma < kScaleFloor) {
    warn("initial ALD scale is below the floor; responses look degenerate");
    s.sigma = kScaleFloor;
  }
  s.resid_sd = sample_sd(marginal.residuals);

  const Index N = data.n_clusters(), q = data.q();
  VectorXd means(N);
  for (Index i = 0; i < N; ++i)
    means(i) = marginal.residuals.segment(data.offset(i), data.size(i)).mean();
  const double mean_sd = std::max(sample_sd(means), kScaleFloor);
  s.scale.chol = MatrixXd::Zero(q, q);
  if (q == 1) {
    s.scale.chol(0, 0) = mean_sd;
    return s;
  }
  // Per-cluster least squares of residuals on Z; spread of the coefficients.
  std::vector<VectorXd> coefs;
  for (Index i = 0; i < N; ++i) {
    if (data.size(i) <= q) continue;
    const MatrixXd Zi = data.Z_block(i);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Zi);
    if (qr.rank() < q) continue;
    coefs.push_back(qr.solve(VectorXd(marginal.residuals.segment(data.offset(i), data.size(i)))));
  }
  for (Index k = 0; k < q; ++k) {
    double sd = mean_sd;
    if (coefs.size() >= 2) {
      VectorXd col(static_cast<Index>(coefs.size()));
      for (std::size_t c = 0; c < coefs.size(); ++c) col(static_cast<Index>(c)) = coefs[c](k);
      sd = std::max(sample_sd(col), kScaleFloor);
    }
    s.scale.chol(k, k) = sd;
  }
  return s;
}

VectorXd initial_steps(const ClusteredDataset& data, const Start& start) {
  const Index p = data.p(), q = data.q();
  const double spread = start.resid_sd > 0.0 ? start.resid_sd : 1.0;
  VectorXd steps(p + 1 + q * (q + 1) / 2);
  for (Index k = 0; k < p; ++k) {
    const double sd = k == 0 ? 0.0 : sample_sd(data.X().col(k));
    steps(k) = 0.1 * spread / (sd > 1e-12 ? sd : 1.0);
  }
  Index at = p;
  steps(at++) = 0.2;
  for (Index k = 0; k < q; ++k) {
    steps(at++) = 0.2;
    for (Index l = 0; l < k; ++l) steps(at++) = 0.1 * start.scale.chol(k, k);
  }
  return steps;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

double ald_logpdf(double y, const AldParams& params) {
  return std::log(params.tau * (1.0 - params.tau) / params.sigma) -
         rho((y - params.mu) / params.sigma, params.tau);
}

ReScale ReScale::scalar(double phi) {
  ReScale s;
  s.chol = MatrixXd::Constant(1, 1, phi);
  return s;
}

VectorXd cluster_loglik(const FixedEffects& beta, double sigma, const ReScale& re_scale,
                        const ClusteredDataset& data, QuantileLevel tau, int nK) {
  if (beta.size() != data.p())
    throw Error(ErrorCode::invalid_argument, "beta length does not match the design");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw Error(ErrorCode::invalid_argument, "ALD scale must be positive");
  check_scale(re_scale, data.q());
  NodeLikelihood like(data, tau, nK);
  VectorXd out;
  Index bad = -1;
  if (!like.loglik(beta, sigma, re_scale, out, bad))
    throw NumericalError(bad, "non-finite marginal likelihood");
  return out;
}

double marginal_loglik(const FixedEffects& beta, double sigma, const ReScale& re_scale,
                       const ClusteredDataset& data, QuantileLevel tau, int nK) {
  const VectorXd per_cluster = cluster_loglik(beta, sigma, re_scale, data, tau, nK);
  double total = 0.0;
  for (Index i = 0; i < per_cluster.size(); ++i) total += per_cluster(i);
  return total;
}

RandomEffects predict_blp(const FixedEffects& beta, double sigma, const ReScale& re_scale,
                          const ClusteredDataset& data, QuantileLevel tau, int nK,
                          BlpMethod method) {
  if (beta.size() != data.p())
    throw Error(ErrorCode::invalid_argument, "beta length does not match the design");
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !beta.allFinite())
    throw Error(ErrorCode::invalid_argument, "parameters must be finite with positive scale");
  check_scale(re_scale, data.q());
  if (method == BlpMethod::linear) return linear_blp(beta, sigma, re_scale, data, tau);
  NodeLikelihood like(data, tau, nK);
  return posterior_mean(like, beta, sigma, re_scale, data);
}

RandomEffects center(const RandomEffects& blp_raw) {
  if (blp_raw.rows() == 0) return blp_raw;
  RandomEffects out = blp_raw;
  for (Index c = 0; c < out.cols(); ++c) {
    double total = 0.0;
    for (Index i = 0; i < out.rows(); ++i) total += out(i, c);
    out.col(c).array() -= total / static_cast<double>(out.rows());
  }
  return out;
}

LqmmFit fit_lqmm(const ClusteredDataset& input, QuantileLevel tau, const LqmmOptions& options) {
  // Work on clusters in canonical order so the fit does not depend on labels.
  const std::vector<Index> order = input.canonical_order();
  const ClusteredDataset data = input.take_clusters(order);
  const Index p = data.p(), q = data.q();
  NodeLikelihood like(data, tau, options.nK);

  Start start;
  if (options.has_start) {
    if (options.start_beta.size() != p)
      throw Error(ErrorCode::invalid_argument, "starting beta has the wrong length");
    check_scale(options.start_scale, q);
    start.beta = options.start_beta;
    start.sigma = std::max(options.start_sigma, kScaleFloor);
    start.scale = options.start_scale;
    start.resid_sd = sample_sd(VectorXd(data.y() - data.X() * start.beta));
  } else {
    start = default_start(data, tau);
  }

  VectorXd work;
  auto negloglik = [&](const VectorXd& theta) {
    const Unpacked u = unpack(theta, p, q);
    Index bad = -1;
    if (!like.loglik(u.beta, u.sigma, u.scale, work, bad))
      return std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (Index i = 0; i < work.size(); ++i) total += work(i);
    return -total;
  };

  NelderMeadOptions nm;
  nm.tolerance = options.tolerance;
  nm.max_evaluations = options.max_evaluations;
  nm.steps = initial_steps(data, start);
  NelderMeadResult best = nelder_mead(negloglik, pack(start.beta, start.sigma, start.scale), nm);
  long evals = best.evaluations;
  if (!best.converged) {
    NelderMeadResult again = nelder_mead(negloglik, best.x, nm);
    evals += again.evaluations;
    if (again.value <= best.value) best = again;
    best.converged = again.converged;
  }
  if (!std::isfinite(best.value))
    throw NumericalError(-1, "marginal likelihood is not finite at any simplex vertex");

  const Unpacked u = unpack(best.x, p, q);
  if (u.sigma <= kScaleFloor) warn("ALD scale reached its lower bound");

  LqmmFit fit;
  fit.beta = u.beta;
  fit.sigma = u.sigma;
  fit.re_scale = u.scale;
  fit.loglik = -best.value;
  fit.converged = best.converged;
  fit.n_evals = evals;
  fit.tau = tau;
  fit.nK = options.nK;

  const RandomEffects canonical_raw =
      options.blp == BlpMethod::linear ? linear_blp(u.beta, u.sigma, u.scale, data, tau)
                                       : posterior_mean(like, u.beta, u.sigma, u.scale, data);
  const RandomEffects canonical_centered = center(canonical_raw);
  fit.blp_raw.resize(input.n_clusters(), q);
  fit.blp.resize(input.n_clusters(), q);
  for (std::size_t k = 0; k < order.size(); ++k) {
    fit.blp_raw.row(order[k]) = canonical_raw.row(static_cast<Index>(k));
    fit.blp.row(order[k]) = canonical_centered.row(static_cast<Index>(k));
  }
  return fit;
}

}  // namespace cqr
