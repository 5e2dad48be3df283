#include "cqr/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <boost/math/distributions/normal.hpp>

#include "cqr/error.hpp"
#include "cqr/parallel.hpp"

namespace cqr {

const char* scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::rw: return "rw";
    case Scheme::rrr: return "rrr";
    case Scheme::rc: return "rc";
    case Scheme::cw: return "cw";
  }
  return "unknown";
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::rw, Scheme::rrr, Scheme::rc, Scheme::cw})
    if (name == scheme_name(s)) return s;
  throw Error(ErrorCode::config, "unknown bootstrap scheme '" + name + "'");
}

bool has_oracle(Scheme scheme) { return scheme == Scheme::rw || scheme == Scheme::rrr; }

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

double draw_weight(double tau, Rng& rng) {
  return rng.uniform() < tau ? -2.0 * tau : 2.0 * (1.0 - tau);
}

VectorXd draw_weights(double tau, Index count, Rng& rng) {
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorCode::invalid_argument, "quantile level must lie in (0, 1)");
  VectorXd w(count);
  for (Index i = 0; i < count; ++i) w(i) = draw_weight(tau, rng);
  return w;
}

namespace {

void require_fit(const TwoStepFit& fit, const ClusteredDataset& data) {
  if (fit.beta.size() != data.p() || fit.residuals.size() != data.n_obs() ||
      fit.blp.rows() != data.n_clusters() || fit.blp.cols() != data.q())
    throw Error(ErrorCode::invalid_argument, "two-step fit does not match the dataset");
}

RandomEffects resample_effects(const RandomEffects& blp, Rng& rng) {
  RandomEffects u(blp.rows(), blp.cols());
  for (Index i = 0; i < blp.rows(); ++i) u.row(i) = blp.row(rng.uniform_index(blp.rows()));
  return u;
}

}  // namespace

Resample gen_rw(const TwoStepFit& fit, const ClusteredDataset& data, double tau, Rng& rng) {
  require_fit(fit, data);
  Resample out;
  out.u_star = resample_effects(fit.blp, rng);
  const VectorXd w = draw_weights(tau, data.n_obs(), rng);
  out.y_star = data.X() * fit.beta + data.offsets_from(out.u_star) +
               w.cwiseProduct(fit.residuals.cwiseAbs());
  return out;
}

Resample gen_rrr(const TwoStepFit& fit, const ClusteredDataset& data, Rng& rng) {
  require_fit(fit, data);
  Resample out;
  out.u_star = resample_effects(fit.blp, rng);
  VectorXd eps(data.n_obs());
  for (Index r = 0; r < data.n_obs(); ++r) eps(r) = fit.residuals(rng.uniform_index(data.n_obs()));
  out.y_star = data.X() * fit.beta + data.offsets_from(out.u_star) + eps;
  return out;
}

ClusteredDataset gen_rc(const ClusteredDataset& data, Rng& rng) {
  const Index N = data.n_clusters();
  if (N < 2) throw Error(ErrorCode::precondition, "cluster resampling needs at least two clusters");
  std::vector<Index> pick(static_cast<std::size_t>(N));
  for (auto& i : pick) i = rng.uniform_index(N);
  return data.take_clusters(pick, true);
}

VectorXd gen_cw(const TwoStepFit& fit, const ClusteredDataset& data, double tau, Rng& rng) {
  if (fit.beta.size() != data.p())
    throw Error(ErrorCode::invalid_argument, "two-step fit does not match the dataset");
  const VectorXd fitted = data.X() * fit.beta;
  const VectorXd level_zero = data.y() - fitted;
  VectorXd y = fitted;
  for (Index i = 0; i < data.n_clusters(); ++i) {
    const double w = draw_weight(tau, rng);
    y.segment(data.offset(i), data.size(i)) += w * level_zero.segment(data.offset(i), data.size(i)).cwiseAbs();
  }
  return y;
}

// ---------------------------------------------------------------------------
// Replicates
// ---------------------------------------------------------------------------

VectorXd column_means(const MatrixXd& m) {
  VectorXd out = VectorXd::Zero(m.cols());
  if (m.rows() == 0) return out;
  for (Index c = 0; c < m.cols(); ++c) {
    double total = 0.0;
    for (Index r = 0; r < m.rows(); ++r) total += m(r, c);
    out(c) = total / static_cast<double>(m.rows());
  }
  return out;
}

VectorXd column_sds(const MatrixXd& m) {
  VectorXd out = VectorXd::Constant(m.cols(), std::numeric_limits<double>::quiet_NaN());
  if (m.rows() < 2) return out;
  const VectorXd mean = column_means(m);
  for (Index c = 0; c < m.cols(); ++c) {
    double ss = 0.0;
    for (Index r = 0; r < m.rows(); ++r) ss += (m(r, c) - mean(c)) * (m(r, c) - mean(c));
    out(c) = std::sqrt(ss / static_cast<double>(m.rows() - 1));
  }
  return out;
}

namespace {

struct Replicate {
  std::optional<FixedEffects> twostep;
  std::optional<FixedEffects> oracle;
};

}  // namespace

BootstrapRun run_bootstrap(const ClusteredDataset& input, QuantileLevel tau,
                           const TwoStepFit& input_fit, const BootstrapOptions& options,
                           RngKey key) {
  if (options.B < 2) throw Error(ErrorCode::invalid_argument, "bootstrap needs B >= 2");
  require_fit(input_fit, input);

  // Resample from the canonical cluster arrangement so replicates do not
  // depend on input order.
  const std::vector<Index> order = input.canonical_order();
  const ClusteredDataset data = input.take_clusters(order);
  TwoStepFit fit;
  fit.beta = input_fit.beta;
  fit.blp.resize(input_fit.blp.rows(), input_fit.blp.cols());
  fit.residuals.resize(data.n_obs());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Index i = order[k];
    fit.blp.row(static_cast<Index>(k)) = input_fit.blp.row(i);
    fit.residuals.segment(data.offset(static_cast<Index>(k)), input.size(i)) =
        input_fit.residuals.segment(input.offset(i), input.size(i));
  }

  TwoStepOptions refit = options.twostep;
  refit.compute_se = false;
  const bool warm = options.warm_start && input_fit.lqmm.beta.size() == data.p();
  if (warm) {
    refit.lqmm.has_start = true;
    refit.lqmm.start_beta = input_fit.lqmm.beta;
    refit.lqmm.start_sigma = input_fit.lqmm.sigma;
    refit.lqmm.start_scale = input_fit.lqmm.re_scale;
  }
  QrOptions oracle_options;
  oracle_options.compute_se = false;

  std::vector<Replicate> reps(static_cast<std::size_t>(options.B));
  parallel_for(options.B, options.threads, [&](Index b) {
    Rng rng(key.child(StreamTag::bootstrap, static_cast<std::uint64_t>(b)));
    Replicate& out = reps[static_cast<std::size_t>(b)];
    try {
      std::optional<ClusteredDataset> sample;
      switch (options.scheme) {
        case Scheme::rw:
        case Scheme::rrr: {
          const Resample rs = options.scheme == Scheme::rw ? gen_rw(fit, data, tau, rng)
                                                           : gen_rrr(fit, data, rng);
          out.oracle = fit_qr(rs.y_star, data.X(), tau, data.offsets_from(rs.u_star),
                              oracle_options)
                           .beta;
          sample.emplace(data.with_response(rs.y_star));
          break;
        }
        case Scheme::rc:
          sample.emplace(gen_rc(data, rng));
          break;
        case Scheme::cw:
          sample.emplace(data.with_response(gen_cw(fit, data, tau, rng)));
          break;
      }
      const TwoStepFit star = fit_twostep(*sample, tau, refit);
      if (star.converged) out.twostep = star.beta;
    } catch (const Error&) {
      out.twostep.reset();
    }
  });

  BootstrapRun run;
  run.scheme = options.scheme;
  run.B = options.B;
  const Index p = data.p();
  const bool oracle = has_oracle(options.scheme);
  Index ok = 0;
  for (Index b = 0; b < options.B; ++b) {
    if (reps[static_cast<std::size_t>(b)].twostep) {
      ++ok;
    } else {
      run.failed.push_back(b);
    }
  }
  run.n_failed = options.B - ok;
  run.beta_star_twostep.resize(ok, p);
  if (oracle) run.beta_star_oracle.resize(ok, p);
  Index row = 0;
  for (const Replicate& r : reps) {
    if (!r.twostep) continue;
    run.beta_star_twostep.row(row) = r.twostep->transpose();
    if (oracle) run.beta_star_oracle.row(row) = r.oracle->transpose();
    ++row;
  }
  run.mean_twostep = column_means(run.beta_star_twostep);
  run.sd_twostep = column_sds(run.beta_star_twostep);
  if (oracle) run.sd_oracle = column_sds(run.beta_star_oracle);
  if (static_cast<double>(run.n_failed) > 0.2 * static_cast<double>(options.B))
    throw UnreliableRunError(std::move(run), "more than 20% of bootstrap replicates failed");
  if (ok < 20) warn("fewer than 20 usable bootstrap replicates; intervals are rough");
  return run;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0))
    throw Error(ErrorCode::invalid_argument, "probability must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

FixedEffects bias_adjust(const FixedEffects& beta_hat, const BootstrapRun& run) {
  if (run.mean_twostep.size() != beta_hat.size())
    throw Error(ErrorCode::invalid_argument, "bootstrap run does not match the estimate");
  return 2.0 * beta_hat - run.mean_twostep;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

std::vector<double> column(const MatrixXd& m, Index c) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m(r, c);
  return v;
}

}  // namespace

std::vector<Interval> basic_ci(const FixedEffects& beta_hat, const BootstrapRun& run, double alpha) {
  check_alpha(alpha);
  if (run.beta_star_twostep.rows() < 1 || run.beta_star_twostep.cols() != beta_hat.size())
    throw Error(ErrorCode::invalid_argument, "bootstrap run does not match the estimate");
  std::vector<Interval> out;
  for (Index k = 0; k < beta_hat.size(); ++k) {
    const std::vector<double> v = column(run.beta_star_twostep, k);
    out.push_back({2.0 * beta_hat(k) - quantile_type7(v, 1.0 - alpha / 2.0),
                   2.0 * beta_hat(k) - quantile_type7(v, alpha / 2.0)});
  }
  return out;
}

SeAdjusted se_adjusted_ci(const FixedEffects& beta_hat, const VectorXd& se_obs,
                          const BootstrapRun& run, double alpha) {
  check_alpha(alpha);
  if (!has_oracle(run.scheme) || run.sd_oracle.size() != beta_hat.size())
    throw Error(ErrorCode::precondition,
                std::string("SE-adjusted intervals need oracle replicates; scheme ") +
                    scheme_name(run.scheme) + " has none");
  if (se_obs.size() != beta_hat.size())
    throw Error(ErrorCode::invalid_argument, "one standard error per coefficient is required");
  SeAdjusted out;
  out.beta_adj = bias_adjust(beta_hat, run);
  out.se_adj.resize(beta_hat.size());
  const double z = normal_quantile(1.0 - alpha / 2.0);
  for (Index k = 0; k < beta_hat.size(); ++k) {
    if (!(run.sd_oracle(k) > 0.0))
      throw NumericalError(-1, "oracle replicates have zero spread for component " +
                                   std::to_string(k));
    out.se_adj(k) = run.sd_twostep(k) * se_obs(k) / run.sd_oracle(k);
    out.intervals.push_back(
        {out.beta_adj(k) - z * out.se_adj(k), out.beta_adj(k) + z * out.se_adj(k)});
  }
  return out;
}

FunctionalSummary summarize_functional(const VectorXd& c, const FixedEffects& beta_hat,
                                       const MatrixXd& cov_obs, const BootstrapRun& run,
                                       double alpha) {
  check_alpha(alpha);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (c.size() != beta_hat.size())
    throw Error(ErrorCode::invalid_argument, "functional length does not match the estimate");
  FunctionalSummary s;
  s.estimate = c.dot(beta_hat);
  s.se_obs = cov_obs.size() ? std::sqrt(std::max(0.0, c.dot(cov_obs * c))) : nan;
  s.estimate_adj = s.se_adj = nan;
  s.basic = s.se_adjusted = {nan, nan};
  if (run.beta_star_twostep.rows() == 0) return s;

  const VectorXd t = run.beta_star_twostep * c;
  std::vector<double> tv(t.data(), t.data() + t.size());
  double mean = 0.0;
  for (double v : tv) mean += v;
  mean /= static_cast<double>(tv.size());
  s.estimate_adj = 2.0 * s.estimate - mean;
  s.basic = {2.0 * s.estimate - quantile_type7(tv, 1.0 - alpha / 2.0),
             2.0 * s.estimate - quantile_type7(tv, alpha / 2.0)};

  if (has_oracle(run.scheme) && run.beta_star_oracle.rows() >= 2 && std::isfinite(s.se_obs)) {
    const double sd_t = column_sds(MatrixXd(t))(0);
    const double sd_o = column_sds(MatrixXd(run.beta_star_oracle * c))(0);
    if (!(sd_o > 0.0)) throw NumericalError(-1, "oracle replicates have zero spread");
    s.se_adj = sd_t * s.se_obs / sd_o;
    const double z = normal_quantile(1.0 - alpha / 2.0);
    s.se_adjusted = {s.estimate_adj - z * s.se_adj, s.estimate_adj + z * s.se_adj};
  }
  return s;
}

}  // namespace cqr
