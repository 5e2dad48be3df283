#include "cqr/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "cqr/error.hpp"

namespace cqr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

CoefRecord blank(double tau, const std::string& term) {
  CoefRecord r;
  r.tau = tau;
  r.term = term;
  r.estimate = r.estimate_adj = r.se_obs = r.se_adj = kNaN;
  r.basic = r.seadj = Interval{kNaN, kNaN};
  return r;
}

Index term_index(const ClusteredDataset& data, const std::string& name) {
  const auto& names = data.term_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::config, "unknown contrast term '" + name + "'");
  return static_cast<Index>(it - names.begin());
}

FitBlock fit_one(const ClusteredDataset& data, const FitRequest& request, double tau_value) {
  const QuantileLevel tau(tau_value);
  const auto& names = data.term_names();
  const Index p = data.p();
  FitBlock block;
  block.tau = tau_value;
  block.estimator = estimator_name(request.estimator);
  for (Index k = 0; k < p; ++k)
    block.coefficients.push_back(blank(tau_value, names[static_cast<std::size_t>(k)]));

  std::vector<VectorXd> contrast_vectors;
  for (const auto& [ref, target] : request.contrasts) {
    VectorXd c = VectorXd::Zero(p);
    c(term_index(data, target)) += 1.0;
    c(term_index(data, ref)) -= 1.0;
    contrast_vectors.push_back(c);
    block.contrasts.push_back(blank(tau_value, target + " - " + ref));
  }

  auto set_point = [&](const FixedEffects& beta, const VectorXd* se, const MatrixXd* cov) {
    for (Index k = 0; k < p; ++k) {
      block.coefficients[static_cast<std::size_t>(k)].estimate = beta(k);
      if (se) block.coefficients[static_cast<std::size_t>(k)].se_obs = (*se)(k);
    }
    for (std::size_t j = 0; j < contrast_vectors.size(); ++j) {
      block.contrasts[j].estimate = contrast_vectors[j].dot(beta);
      if (cov)
        block.contrasts[j].se_obs =
            std::sqrt(std::max(0.0, contrast_vectors[j].dot(*cov * contrast_vectors[j])));
    }
  };

  TwoStepOptions ts;
  ts.lqmm.nK = request.nK;
  ts.lqmm.blp = request.blp;
  // Keyed by the level itself, so a block does not depend on the rest of the tau list.
  const RngKey key = RngKey(request.seed).child(std::bit_cast<std::uint64_t>(tau_value));

  switch (request.estimator) {
    case EstimatorKind::oracle:
      throw Error(ErrorCode::config, "the oracle estimator needs the true effects; use simulate");
    case EstimatorKind::marginal: {
      const QrFit f = fit_marginal(data, tau);
      set_point(f.beta, &f.se, &f.cov);
      break;
    }
    case EstimatorKind::canay: {
      const QrFit f = fit_canay(data, tau);
      set_point(f.beta, &f.se, &f.cov);
      break;
    }
    case EstimatorKind::l1pen:
    case EstimatorKind::l2pen: {
      const PenaltyKind kind =
          request.estimator == EstimatorKind::l1pen ? PenaltyKind::l1 : PenaltyKind::l2;
      set_point(fit_penalized(data, tau, PenaltySpec::cv(kind)).beta, nullptr, nullptr);
      break;
    }
    case EstimatorKind::lqmm: {
      const LqmmFit f = fit_lqmm(data, tau, ts.lqmm);
      block.converged = f.converged;
      set_point(f.beta, nullptr, nullptr);
      break;
    }
    case EstimatorKind::jackknife: {
      Rng rng(key.child(StreamTag::jackknife));
      set_point(jackknife_adjust(
                    data, [&](const ClusteredDataset& d) { return fit_lqmm(d, tau, ts.lqmm).beta; },
                    rng),
                nullptr, nullptr);
      break;
    }
    case EstimatorKind::twostep: {
      const TwoStepFit f = fit_twostep(data, tau, ts);
      block.converged = f.converged;
      set_point(f.beta, &f.se_obs, &f.cov);
      break;
    }
    case EstimatorKind::adjusted: {
      const TwoStepFit f = fit_twostep(data, tau, ts);
      block.converged = f.converged;
      set_point(f.beta, &f.se_obs, &f.cov);
      BootstrapOptions bo;
      bo.B = request.B;
      bo.scheme = request.scheme;
      bo.threads = request.threads;
      bo.twostep = ts;
      const BootstrapRun run =
          run_bootstrap(data, tau, f, bo, key.child(StreamTag::scheme,
                                                    static_cast<std::uint64_t>(request.scheme)));
      block.n_failed = run.n_failed;
      auto fill = [&](CoefRecord& r, const VectorXd& c) {
        const FunctionalSummary s = summarize_functional(c, f.beta, f.cov, run, request.alpha);
        r.estimate_adj = s.estimate_adj;
        r.se_adj = s.se_adj;
        r.basic = s.basic;
        r.seadj = s.se_adjusted;
        r.B = run.B;
        r.scheme = scheme_name(run.scheme);
      };
      for (Index k = 0; k < p; ++k)
        fill(block.coefficients[static_cast<std::size_t>(k)], VectorXd::Unit(p, k));
      for (std::size_t j = 0; j < contrast_vectors.size(); ++j)
        fill(block.contrasts[j], contrast_vectors[j]);
      break;
    }
  }
  return block;
}

}  // namespace

void FitRequest::validate() const {
  if (taus.empty()) throw Error(ErrorCode::config, "tau list is empty");
  for (double t : taus)
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::config, "tau must lie in (0, 1)");
  if (estimator == EstimatorKind::adjusted && B < 2)
    throw Error(ErrorCode::config, "B must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::config, "alpha must lie in (0, 1)");
  if (threads < 1) throw Error(ErrorCode::config, "threads must be at least 1");
  if (nK < 1 || nK > 64) throw Error(ErrorCode::config, "nK must lie in [1, 64]");
}

FitReport run_fit(const ClusteredDataset& data, const FitRequest& request) {
  request.validate();
  for (const auto& [ref, target] : request.contrasts) {
    term_index(data, ref);
    term_index(data, target);
  }
  FitReport report;
  for (double tau : request.taus) report.blocks.push_back(fit_one(data, request, tau));
  return report;
}

}  // namespace cqr
