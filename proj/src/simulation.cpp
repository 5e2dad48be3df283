#include "cqr/simulation.hpp"

#include <chrono>
#include <cmath>
#include <mutex>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "cqr/error.hpp"
#include "cqr/parallel.hpp"

namespace cqr {

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

const char* error_dist_name(ErrorDist dist) {
  switch (dist) {
    case ErrorDist::gaussian: return "gaussian";
    case ErrorDist::t3_scaled: return "t3_scaled";
    case ErrorDist::ald: return "ald";
  }
  return "unknown";
}

ErrorDist parse_error_dist(const std::string& name) {
  for (ErrorDist d : {ErrorDist::gaussian, ErrorDist::t3_scaled, ErrorDist::ald})
    if (name == error_dist_name(d)) return d;
  throw Error(ErrorCode::config, "unknown error distribution '" + name + "'");
}

double ald_unit_sigma(double tau0) {
  return tau0 * (1.0 - tau0) / std::sqrt(1.0 - 2.0 * tau0 + 2.0 * tau0 * tau0);
}

double ScenarioSpec::ald_scale() const {
  return ald_sigma0 > 0.0 ? ald_sigma0 : ald_unit_sigma(ald_tau0);
}

void ScenarioSpec::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(ErrorCode::config, "invalid scenario value for '" + key + "': " + why);
  };
  if (N < 2) fail("N", "need at least two clusters");
  if (n_i < 1) fail("n_i", "need at least one observation per cluster");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau", "must lie in (0, 1)");
  if (!(gamma >= 0.0)) fail("gamma", "must be nonnegative");
  if (!(sigma_u2 > 0.0)) fail("sigma_u2", "must be positive");
  if (!(sigma_e2 > 0.0)) fail("sigma_e2", "must be positive");
  if (!(sigma_v2 >= 0.0)) fail("sigma_v2", "must be nonnegative");
  if (!(ald_tau0 > 0.0 && ald_tau0 < 1.0)) fail("ald_tau0", "must lie in (0, 1)");
  if (!(ald_sigma0 >= 0.0)) fail("ald_sigma0", "must be nonnegative");
  if (reps < 1) fail("reps", "must be positive");
  if (B < 2) fail("B", "must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (nK < 1 || nK > 64) fail("nK", "must lie in [1, 64]");
  if (N * n_i <= 2) fail("n_i", "too few observations for a two-coefficient fit");
  for (EstimatorKind e : estimators) {
    const bool intercept_only = e == EstimatorKind::canay || e == EstimatorKind::l1pen ||
                                e == EstimatorKind::l2pen;
    if (intercept_only && random_slope())
      fail("estimators", std::string(estimator_name(e)) + " does not support random slopes");
    if (e == EstimatorKind::jackknife && n_i < 2) fail("estimators", "jk needs n_i >= 2");
  }
  for (EstimatorKind e : estimators)
    if (e == EstimatorKind::adjusted && schemes.empty()) fail("schemes", "adj needs a scheme");
}

double error_quantile(const ScenarioSpec& spec, double p) {
  switch (spec.error_dist) {
    case ErrorDist::gaussian:
      return boost::math::quantile(boost::math::normal(), p);
    case ErrorDist::t3_scaled:
      return boost::math::quantile(boost::math::students_t(3.0), p) / std::sqrt(3.0);
    case ErrorDist::ald: {
      const double t0 = spec.ald_tau0, s0 = spec.ald_scale();
      if (p <= t0) return s0 / (1.0 - t0) * std::log(p / t0);
      return -s0 / t0 * std::log((1.0 - p) / (1.0 - t0));
    }
  }
  return 0.0;
}

std::pair<double, double> true_params(const ScenarioSpec& spec) {
  const double q = std::sqrt(spec.sigma_e2) * error_quantile(spec, spec.tau);
  return {spec.beta0 + q, spec.beta1 + spec.gamma * q};
}

double marginal_quantile(const ScenarioSpec& spec, double x, double tau) {
  if (spec.error_dist != ErrorDist::gaussian)
    throw Error(ErrorCode::unsupported, "marginal quantile is available for Gaussian errors only");
  if (spec.random_slope())
    throw Error(ErrorCode::unsupported, "marginal quantile assumes a random intercept only");
  const double z = boost::math::quantile(boost::math::normal(), tau);
  const double scale = 1.0 + spec.gamma * x;
  return spec.beta0 + spec.beta1 * x +
         z * std::sqrt(spec.sigma_u2 + scale * scale * spec.sigma_e2);
}

double draw_error(const ScenarioSpec& spec, Rng& rng) {
  switch (spec.error_dist) {
    case ErrorDist::gaussian: return rng.normal();
    case ErrorDist::t3_scaled: return rng.student_t3() / std::sqrt(3.0);
    case ErrorDist::ald: return error_quantile(spec, rng.uniform_open());
  }
  return 0.0;
}

SimulatedData gen_dataset(const ScenarioSpec& spec, Rng& rng) {
  const Index N = spec.N, n_i = spec.n_i, n = N * n_i;
  const bool slope = spec.random_slope();
  const double su = std::sqrt(spec.sigma_u2), se = std::sqrt(spec.sigma_e2),
               sv = std::sqrt(spec.sigma_v2);
  VectorXd y(n);
  MatrixXd X(n, 2);
  RandomEffects u(N, slope ? 2 : 1);
  std::vector<std::string> ids;
  for (Index i = 0; i < N; ++i) {
    ids.push_back(std::to_string(i + 1));
    u(i, 0) = su * rng.normal();
    if (slope) u(i, 1) = sv * rng.normal();
    for (Index j = 0; j < n_i; ++j) {
      const Index r = i * n_i + j;
      const double x = rng.uniform();
      const double e = draw_error(spec, rng);
      const double slope_i = spec.beta1 + (slope ? u(i, 1) : 0.0);
      y(r) = spec.beta0 + u(i, 0) + slope_i * x + (1.0 + spec.gamma * x) * se * e;
      X(r, 0) = 1.0;
      X(r, 1) = x;
    }
  }
  std::vector<Index> z_cols{0};
  if (slope) z_cols.push_back(1);
  return {ClusteredDataset(std::move(ids), std::vector<Index>(static_cast<std::size_t>(N), n_i),
                           std::move(y), std::move(X), std::move(z_cols),
                           {kInterceptName, "x"}, "y", "cluster"),
          std::move(u)};
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

namespace {

struct Column {
  std::string label;
  EstimatorKind kind;
  Scheme scheme = Scheme::rw;
};

struct Outcome {
  FixedEffects beta;
  std::vector<Interval> basic;
  std::vector<Interval> seadj;
};

struct RepResult {
  std::vector<std::optional<Outcome>> outcomes;
  std::vector<std::string> notes;
};

std::vector<Column> columns_of(const ScenarioSpec& spec) {
  std::vector<Column> cols;
  for (EstimatorKind e : spec.estimators) {
    if (e == EstimatorKind::adjusted) {
      for (Scheme s : spec.schemes)
        cols.push_back({std::string("adj(") + scheme_name(s) + ")", e, s});
    } else {
      cols.push_back({estimator_name(e), e});
    }
  }
  return cols;
}

RepResult run_replication(const ScenarioSpec& spec, const std::vector<Column>& cols, Index rep) {
  const QuantileLevel tau(spec.tau);
  const RngKey key = RngKey(*spec.seed).child(StreamTag::replication, static_cast<std::uint64_t>(rep));
  Rng data_rng(key.child(StreamTag::data));
  const SimulatedData sim = gen_dataset(spec, data_rng);

  TwoStepOptions ts_options;
  ts_options.lqmm.nK = spec.nK;
  ts_options.lqmm.blp = spec.blp;
  std::optional<TwoStepFit> twostep;
  auto get_twostep = [&]() -> const TwoStepFit& {
    if (!twostep) twostep = fit_twostep(sim.data, tau, ts_options);
    return *twostep;
  };
  QrOptions quiet;
  quiet.compute_se = false;

  RepResult result;
  result.outcomes.resize(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    Outcome out;
    try {
      switch (cols[c].kind) {
        case EstimatorKind::oracle:
          out.beta = fit_oracle(sim.data, sim.u_true, tau, quiet).beta;
          break;
        case EstimatorKind::marginal:
          out.beta = fit_marginal(sim.data, tau, quiet).beta;
          break;
        case EstimatorKind::canay:
          out.beta = fit_canay(sim.data, tau, quiet).beta;
          break;
        case EstimatorKind::l1pen:
          out.beta = fit_penalized(sim.data, tau, PenaltySpec::cv(PenaltyKind::l1)).beta;
          break;
        case EstimatorKind::l2pen:
          out.beta = fit_penalized(sim.data, tau, PenaltySpec::cv(PenaltyKind::l2)).beta;
          break;
        case EstimatorKind::lqmm:
          out.beta = get_twostep().lqmm.beta;
          break;
        case EstimatorKind::jackknife: {
          Rng rng(key.child(StreamTag::jackknife));
          out.beta = jackknife_adjust(
              sim.data,
              [&](const ClusteredDataset& d) { return fit_lqmm(d, tau, ts_options.lqmm).beta; },
              rng);
          break;
        }
        case EstimatorKind::twostep:
          out.beta = get_twostep().beta;
          break;
        case EstimatorKind::adjusted: {
          const TwoStepFit& fit = get_twostep();
          BootstrapOptions bo;
          bo.B = spec.B;
          bo.scheme = cols[c].scheme;
          bo.twostep = ts_options;
          const BootstrapRun run = run_bootstrap(
              sim.data, tau, fit, bo,
              key.child(StreamTag::scheme, static_cast<std::uint64_t>(cols[c].scheme)));
          out.beta = bias_adjust(fit.beta, run);
          out.basic = basic_ci(fit.beta, run, spec.alpha);
          if (has_oracle(cols[c].scheme))
            out.seadj = se_adjusted_ci(fit.beta, fit.se_obs, run, spec.alpha).intervals;
          break;
        }
      }
      if (!out.beta.allFinite()) throw NumericalError(-1, "non-finite estimate");
      result.outcomes[c] = std::move(out);
    } catch (const Error& e) {
      result.notes.push_back("replication " + std::to_string(rep + 1) + ": " + cols[c].label +
                             " excluded (" + e.what() + ")");
    }
  }
  return result;
}

}  // namespace

SimReport run_scenario(const ScenarioSpec& spec, const SimOptions& options) {
  spec.validate();
  if (!spec.seed) throw Error(ErrorCode::config, "a seed is required for simulation");
  const auto started = std::chrono::steady_clock::now();
  const std::vector<Column> cols = columns_of(spec);

  std::vector<RepResult> reps(static_cast<std::size_t>(spec.reps));
  std::mutex progress_mutex;
  Index done = 0;
  parallel_for(spec.reps, options.threads, [&](Index r) {
    reps[static_cast<std::size_t>(r)] = run_replication(spec, cols, r);
    if (options.progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      options.progress(++done, spec.reps);
    }
  });

  SimReport report;
  report.spec = spec;
  const auto [t0, t1] = true_params(spec);
  const double truth[2] = {t0, t1};
  const char* names[2] = {"beta0", "beta1"};
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (Index k = 0; k < 2; ++k) {
      std::vector<double> est;
      std::vector<Interval> basic, seadj;
      for (const RepResult& r : reps) {
        const auto& o = r.outcomes[c];
        if (!o) continue;
        est.push_back(o->beta(k));
        if (!o->basic.empty()) basic.push_back(o->basic[static_cast<std::size_t>(k)]);
        if (!o->seadj.empty()) seadj.push_back(o->seadj[static_cast<std::size_t>(k)]);
      }
      report.rows.push_back(summarize_row(cols[c].label, names[k], truth[k], est,
                                          basic.empty() ? nullptr : &basic,
                                          seadj.empty() ? nullptr : &seadj));
    }
  }
  for (const RepResult& r : reps)
    report.notes.insert(report.notes.end(), r.notes.begin(), r.notes.end());
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace cqr
