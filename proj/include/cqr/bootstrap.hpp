#pragma once

#include <string>
#include <vector>

#include "cqr/data.hpp"
#include "cqr/estimators.hpp"
#include "cqr/random.hpp"

namespace cqr {

enum class Scheme {
  /// Coupled wild residuals plus resampled cluster effects.
  rw,
  /// Pooled residuals plus resampled cluster effects.
  rrr,
  /// Whole clusters with replacement.
  rc,
  /// Wild residuals sharing one weight per cluster.
  cw,
};

const char* scheme_name(Scheme scheme);
Scheme parse_scheme(const std::string& name);
/// True for the schemes that produce oracle replicates.
bool has_oracle(Scheme scheme);

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Two-point law: 2(1 - tau) with probability 1 - tau, -2 tau with
/// probability tau. Its tau-quantile is zero.
double draw_weight(double tau, Rng& rng);
VectorXd draw_weights(double tau, Index count, Rng& rng);

struct Resample {
  VectorXd y_star;
  RandomEffects u_star;
};

/// Y* = X b + Z u* + w |eps|, with u* rows drawn with replacement from the
/// centered predictions and one weight per observation.
Resample gen_rw(const TwoStepFit& fit, const ClusteredDataset& data, double tau, Rng& rng);

/// Y* = X b + Z u* + eps*, eps* drawn with replacement from all residuals.
Resample gen_rrr(const TwoStepFit& fit, const ClusteredDataset& data, Rng& rng);

/// N clusters drawn with replacement and relabeled 1..N.
ClusteredDataset gen_rc(const ClusteredDataset& data, Rng& rng);

/// Y* = X b + w_i |y - X b|, one weight per cluster.
VectorXd gen_cw(const TwoStepFit& fit, const ClusteredDataset& data, double tau, Rng& rng);

// ---------------------------------------------------------------------------
// Replicates and inference
// ---------------------------------------------------------------------------

struct BootstrapOptions {
  Index B = 100;
  Scheme scheme = Scheme::rw;
  int threads = 1;
  /// Settings for each replicate's two-step refit.
  TwoStepOptions twostep;
  /// Start each replicate's LQMM search at the original fit's parameters.
  bool warm_start = true;
};

struct BootstrapRun {
  Scheme scheme = Scheme::rw;
  Index B = 0;
  /// Successful replicates only, in replicate order.
  MatrixXd beta_star_twostep;
  /// Oracle replicates for RW and RRR; empty otherwise.
  MatrixXd beta_star_oracle;
  VectorXd mean_twostep;
  VectorXd sd_twostep;
  VectorXd sd_oracle;
  Index n_failed = 0;
  std::vector<Index> failed;
};

/// Raised when more than 20% of the replicates fail. Carries the partial run.
class UnreliableRunError : public Error {
 public:
  UnreliableRunError(BootstrapRun run, const std::string& message)
      : Error(ErrorCode::unreliable, message), run_(std::move(run)) {}
  const BootstrapRun& run() const noexcept { return run_; }

 private:
  BootstrapRun run_;
};

/// Runs B replicates. Replicate b draws from key.child(bootstrap, b), so the
/// result does not depend on the thread count.
BootstrapRun run_bootstrap(const ClusteredDataset& data, QuantileLevel tau, const TwoStepFit& fit,
                           const BootstrapOptions& options, RngKey key);

/// Column means and sample standard deviations in row order.
VectorXd column_means(const MatrixXd& m);
VectorXd column_sds(const MatrixXd& m);

/// Type-7 sample quantile (linear interpolation of order statistics).
double quantile_type7(std::vector<double> values, double prob);

/// 2 b - mean(b*).
FixedEffects bias_adjust(const FixedEffects& beta_hat, const BootstrapRun& run);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// (2 b_k - q*_{1 - a/2}, 2 b_k - q*_{a/2}) per component.
std::vector<Interval> basic_ci(const FixedEffects& beta_hat, const BootstrapRun& run, double alpha);

struct SeAdjusted {
  VectorXd se_adj;
  FixedEffects beta_adj;
  std::vector<Interval> intervals;
};

/// SE_adj = SD_twostep * SE_obs / SD_oracle and b_adj +/- z SE_adj.
SeAdjusted se_adjusted_ci(const FixedEffects& beta_hat, const VectorXd& se_obs,
                          const BootstrapRun& run, double alpha);

/// Inference for the linear functional c'beta; NaN where not applicable.
struct FunctionalSummary {
  double estimate = 0.0;
  double estimate_adj = 0.0;
  double se_obs = 0.0;
  double se_adj = 0.0;
  Interval basic;
  Interval se_adjusted;
};

FunctionalSummary summarize_functional(const VectorXd& c, const FixedEffects& beta_hat,
                                       const MatrixXd& cov_obs, const BootstrapRun& run,
                                       double alpha);

}  // namespace cqr
