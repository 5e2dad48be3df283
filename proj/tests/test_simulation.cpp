#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "cqr/estimators.hpp"
#include "cqr/simulation.hpp"
#include "test_util.hpp"

namespace cqr {
namespace {

using test::throws_code;

double empirical_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return quantile_type7(v, p);
}

// Standard error of a sample p-quantile with density f at the quantile.
double quantile_mc_error(double p, double density, std::size_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n)) / density;
}

ScenarioSpec ald_spec() {
  ScenarioSpec s;
  s.error_dist = ErrorDist::ald;
  s.ald_tau0 = 0.1;
  s.ald_sigma0 = 0.09939;
  s.gamma = 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// True parameters
// ---------------------------------------------------------------------------

TEST(TrueParams, Benchmark) {
  const auto [b0, b1] = true_params(ScenarioSpec{});
  // Reference value has three decimals; 1 + qnorm(0.1) = -0.28155 truncates to -0.281.
  EXPECT_NEAR(b0, -0.281, 1e-3);
  EXPECT_NEAR(b1, 0.487, 1e-3);
}

TEST(TrueParams, MedianGaussian) {
  ScenarioSpec s;
  s.tau = 0.5;
  const auto [b0, b1] = true_params(s);
  EXPECT_NEAR(b0, 1.0, 1e-15);
  EXPECT_NEAR(b1, 1.0, 1e-15);
}

TEST(TrueParams, AldAtItsOwnQuantileIsExact) {
  const auto [b0, b1] = true_params(ald_spec());
  EXPECT_EQ(b0, 1.0);
  EXPECT_EQ(b1, 1.0);
}

TEST(TrueParams, UnitVarianceAldScale) {
  // Var of ALD(0, s, t) is s^2 (1 - 2t + 2t^2) / (t (1-t))^2.
  for (double t : {0.1, 0.3, 0.5}) {
    const double s = ald_unit_sigma(t);
    EXPECT_NEAR(s * s * (1 - 2 * t + 2 * t * t) / std::pow(t * (1 - t), 2), 1.0, 1e-14);
  }
  EXPECT_NEAR(ald_unit_sigma(0.1), 0.09939, 1e-5);
}

// The standardized error of every family: empirical quantiles of 1e6
// draws match the closed-form quantile within 3 MC errors.
TEST(TrueParams, MatchEmpiricalErrorQuantiles) {
  std::vector<ScenarioSpec> specs(3);
  specs[1].error_dist = ErrorDist::t3_scaled;
  specs[2] = ald_spec();
  const std::size_t n = 1000000;
  for (const auto& base : specs) {
    for (double tau : {0.1, 0.25, 0.5, 0.9}) {
      ScenarioSpec s = base;
      s.tau = tau;
      Rng rng{RngKey(100).child(StreamTag::data, static_cast<std::uint64_t>(tau * 100))};
      std::vector<double> e(n);
      for (auto& v : e) v = draw_error(s, rng);
      const double q = error_quantile(s, tau);
      // Density at q from a central difference of the quantile function.
      const double h = 1e-5;
      const double density = 2 * h / (error_quantile(s, tau + h) - error_quantile(s, tau - h));
      EXPECT_NEAR(empirical_quantile(e, tau), q, 3.0 * quantile_mc_error(tau, density, n))
          << error_dist_name(s.error_dist) << " tau=" << tau;
      // Unit variance.
      double ss = 0.0, sum = 0.0;
      for (double v : e) {
        sum += v;
        ss += v * v;
      }
      const double var = ss / n - (sum / n) * (sum / n);
      EXPECT_NEAR(var, 1.0, s.error_dist == ErrorDist::t3_scaled ? 0.1 : 0.01);
    }
  }
}

// ---------------------------------------------------------------------------
// Data generation
// ---------------------------------------------------------------------------

TEST(GenDataset, LayoutAndRanges) {
  ScenarioSpec s;
  s.N = 40;
  s.n_i = 3;
  Rng rng{RngKey(101)};
  const auto sim = gen_dataset(s, rng);
  EXPECT_EQ(sim.data.n_clusters(), 40);
  EXPECT_EQ(sim.data.n_obs(), 120);
  EXPECT_EQ(sim.data.p(), 2);
  EXPECT_EQ(sim.data.q(), 1);
  EXPECT_EQ(sim.u_true.rows(), 40);
  EXPECT_EQ(sim.u_true.cols(), 1);
  EXPECT_TRUE((sim.data.X().col(0).array() == 1.0).all());
  EXPECT_TRUE((sim.data.X().col(1).array() > 0.0).all());
  EXPECT_TRUE((sim.data.X().col(1).array() < 1.0).all());

  s.sigma_v2 = 1.0;
  Rng rng2{RngKey(101)};
  const auto slope = gen_dataset(s, rng2);
  EXPECT_EQ(slope.data.q(), 2);
  EXPECT_EQ(slope.u_true.cols(), 2);
  EXPECT_EQ(slope.data.Z_block(0).col(1), slope.data.X_block(0).col(1));
}

TEST(GenDataset, WithinClusterCorrelationIsIcc) {
  ScenarioSpec s;
  s.gamma = 0.0;
  s.sigma_u2 = 1.5;
  s.sigma_e2 = 0.5;
  s.N = 50000;
  s.n_i = 2;
  Rng rng{RngKey(102)};
  const auto sim = gen_dataset(s, rng);
  const VectorXd r = sim.data.y() - sim.data.X() * Eigen::Vector2d(s.beta0, s.beta1);
  double saa = 0, sbb = 0, sab = 0;
  for (Index i = 0; i < s.N; ++i) {
    const double a = r(2 * i), b = r(2 * i + 1);
    saa += a * a;
    sbb += b * b;
    sab += a * b;
  }
  const double rho = sab / std::sqrt(saa * sbb), icc = 0.75;
  EXPECT_NEAR(rho, icc, 4.0 * (1 - icc * icc) / std::sqrt(static_cast<double>(s.N)));
}

TEST(GenDataset, StandardizedResidualQuantile) {
  ScenarioSpec s;
  s.N = 100000;
  s.n_i = 10;
  Rng rng{RngKey(103)};
  const auto sim = gen_dataset(s, rng);
  const auto& X = sim.data.X();
  const VectorXd off = sim.data.offsets_from(sim.u_true);
  std::vector<double> e(static_cast<std::size_t>(sim.data.n_obs()));
  for (Index r = 0; r < sim.data.n_obs(); ++r)
    e[static_cast<std::size_t>(r)] =
        (sim.data.y()(r) - s.beta0 - s.beta1 * X(r, 1) - off(r)) / (1.0 + s.gamma * X(r, 1));
  const double q = error_quantile(s, 0.1);
  const double density = boost::math::pdf(boost::math::normal(), q);
  EXPECT_NEAR(empirical_quantile(e, 0.1), q, 3.0 * quantile_mc_error(0.1, density, e.size()));
}

TEST(GenDataset, VanishingClusterVarianceGivesMarginalTruth) {
  ScenarioSpec s;
  s.sigma_u2 = 1e-12;
  s.N = 10000;
  s.n_i = 10;
  Rng rng{RngKey(104)};
  const auto sim = gen_dataset(s, rng);
  EXPECT_LT(sim.u_true.cwiseAbs().maxCoeff(), 1e-5);
  QrOptions quiet;
  quiet.compute_se = false;
  const auto fit = fit_marginal(sim.data, QuantileLevel(0.1), quiet);
  const auto [b0, b1] = true_params(s);
  // Asymptotic SDs at this size are about 0.013 and 0.023.
  EXPECT_NEAR(fit.beta(0), b0, 0.045);
  EXPECT_NEAR(fit.beta(1), b1, 0.075);
}

TEST(GenDataset, SameKeySameData) {
  ScenarioSpec s;
  s.N = 20;
  Rng a{RngKey(105)}, b{RngKey(105)};
  const auto x = gen_dataset(s, a), y = gen_dataset(s, b);
  EXPECT_EQ(x.data.y(), y.data.y());
  EXPECT_EQ(x.data.X(), y.data.X());
  EXPECT_EQ(x.u_true, y.u_true);
}

// ---------------------------------------------------------------------------
// Marginal quantile
// ---------------------------------------------------------------------------

TEST(MarginalQuantile, Examples) {
  ScenarioSpec s;
  s.gamma = 0.0;
  s.sigma_u2 = 1e-300;
  const double z = boost::math::quantile(boost::math::normal(), 0.1);
  EXPECT_NEAR(marginal_quantile(s, 0.3, 0.1), 1.0 + 0.3 + z, 1e-12);
  s = ScenarioSpec{};
  s.sigma_e2 = 2.0;
  EXPECT_NEAR(marginal_quantile(s, 0.7, 0.5), 1.7, 1e-15);
  EXPECT_TRUE(throws_code([] { marginal_quantile(ald_spec(), 0.5, 0.1); }, ErrorCode::unsupported));
}

TEST(MarginalQuantile, MatchesEmpiricalBins) {
  ScenarioSpec s;
  s.N = 1000000;
  s.n_i = 1;
  Rng rng{RngKey(106)};
  const auto sim = gen_dataset(s, rng);
  for (double x0 : {0.0, 0.5, 1.0}) {
    std::vector<double> bin;
    for (Index r = 0; r < sim.data.n_obs(); ++r)
      if (std::abs(sim.data.X()(r, 1) - x0) < 0.01) bin.push_back(sim.data.y()(r));
    // Edge bins are one-sided; evaluate the truth at the bin's mean x.
    const double xm = x0 == 0.0 ? 0.005 : x0 == 1.0 ? 0.995 : 0.5;
    const double q = marginal_quantile(s, xm, 0.1);
    const double scale = std::sqrt(s.sigma_u2 + std::pow(1 + s.gamma * xm, 2) * s.sigma_e2);
    const double density = boost::math::pdf(boost::math::normal(0.0, scale), q - 1.0 - xm);
    EXPECT_NEAR(empirical_quantile(bin, 0.1), q, 3.0 * quantile_mc_error(0.1, density, bin.size()) + 0.005)
        << "x=" << x0 << " n=" << bin.size();
  }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

TEST(SummarizeRow, Metrics) {
  const std::vector<double> est{1.0, 2.0, 4.0};
  std::vector<Interval> basic{{0.0, 2.0}, {2.5, 3.0}, {1.0, 1.5}};
  const auto row = summarize_row("x", "beta0", 1.5, est, &basic);
  EXPECT_NEAR(row.bias, 7.0 / 3.0 - 1.5, 1e-15);
  EXPECT_NEAR(row.sd, std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                 (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0),
              1e-15);
  EXPECT_NEAR(row.rmse, std::sqrt((0.25 + 0.25 + 6.25) / 3), 1e-15);
  EXPECT_NEAR(row.mcse_bias, row.sd / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(row.coverage_basic, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(row.mcse_coverage_basic, std::sqrt(2.0 / 9.0 / 3.0), 1e-15);
  EXPECT_NEAR(row.length_basic, 3.0 / 3.0, 1e-15);
  EXPECT_TRUE(std::isnan(row.coverage_seadj));
  EXPECT_EQ(row.reps_used, 3);
}

TEST(SummarizeRow, RmseBiasSdIdentity) {
  Rng rng{RngKey(107)};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> est(2 + rng.uniform_index(300));
    for (auto& e : est) e = 3.0 * rng.normal() + 1.0;
    const auto row = summarize_row("x", "beta1", rng.normal(), est);
    const double n = static_cast<double>(est.size());
    const double lhs = row.rmse * row.rmse;
    const double rhs = row.bias * row.bias + row.sd * row.sd * (n - 1) / n;
    EXPECT_NEAR(lhs, rhs, 1e-9 * lhs);
  }
}

TEST(Render, HeaderOnlyAndOneRow) {
  SimReport empty;
  const std::string header =
      "estimator,component,reps_used,truth,bias,sd,rmse,mcse_bias,cov_basic,mcse_cov_basic,"
      "len_basic,cov_seadj,mcse_cov_seadj,len_seadj\n";
  EXPECT_EQ(render_csv(empty), header);

  SimReport one;
  one.rows.push_back(summarize_row("twostep", "beta1", 0.487, {0.5, 0.6}));
  EXPECT_EQ(render_csv(one), header + "twostep,beta1,2,0.487,0.063,0.07071,0.08043,0.05,NA,NA,NA,NA,NA,NA\n");
  const std::string text = render_text(one);
  EXPECT_NE(text.find("twostep"), std::string::npos);
  EXPECT_NE(text.find("0.07071"), std::string::npos);
}

TEST(Render, ExclusionNotes) {
  SimReport r;
  r.rows.push_back(summarize_row("lqmm", "beta0", 0.0, {}));
  r.notes = {"replication 3: lqmm excluded (solver failed)"};
  const std::string text = render_text(r);
  EXPECT_NE(text.find("excluded replications: 1"), std::string::npos);
  EXPECT_NE(text.find("replication 3: lqmm excluded"), std::string::npos);
  EXPECT_EQ(render_csv(r).substr(render_csv(r).find('\n') + 1), "lqmm,beta0,0,0,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA\n");
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

TEST(ScenarioFile, ParseAndRoundTrip) {
  const auto s = parse_scenario(
      "# comment\nN = 50\n n_i=4\ntau = 0.25  # trailing\nerror_dist = ald\nald_tau0 = 0.3\n"
      "seed = 9\nestimators = oracle, marg,canay\nschemes = rw,cw\nsigma_v2 = 0.5\n");
  EXPECT_EQ(s.N, 50);
  EXPECT_EQ(s.n_i, 4);
  EXPECT_EQ(s.tau, 0.25);
  EXPECT_EQ(s.error_dist, ErrorDist::ald);
  EXPECT_EQ(*s.seed, 9u);
  EXPECT_EQ(s.estimators, (std::vector<EstimatorKind>{EstimatorKind::oracle, EstimatorKind::marginal,
                                                      EstimatorKind::canay}));
  EXPECT_EQ(s.schemes, (std::vector<Scheme>{Scheme::rw, Scheme::cw}));
  EXPECT_TRUE(s.random_slope());
  EXPECT_EQ(scenario_to_text(parse_scenario(scenario_to_text(s))), scenario_to_text(s));
}

TEST(ScenarioFile, Errors) {
  try {
    parse_scenario("N = 5\nbogus_key = 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
  }
  EXPECT_TRUE(throws_code([] { parse_scenario("N = five\n"); }, ErrorCode::config));
  EXPECT_TRUE(throws_code([] { parse_scenario("tau = 0.1x\n"); }, ErrorCode::config));
  EXPECT_TRUE(throws_code([] { parse_scenario("estimators = lqmm,nope\n"); }, ErrorCode::config));
  EXPECT_TRUE(throws_code([] { parse_scenario("just words\n"); }, ErrorCode::config));
  EXPECT_TRUE(throws_code([] { load_scenario("/nonexistent/scenario.txt"); }, ErrorCode::io));
}

TEST(ScenarioSpecValidate, Fields) {
  auto bad = [](auto mutate) {
    ScenarioSpec s;
    mutate(s);
    return throws_code([&] { s.validate(); }, ErrorCode::config);
  };
  EXPECT_NO_THROW(ScenarioSpec{}.validate());
  EXPECT_TRUE(bad([](ScenarioSpec& s) { s.gamma = -0.1; }));
  EXPECT_TRUE(bad([](ScenarioSpec& s) { s.sigma_u2 = 0.0; }));
  EXPECT_TRUE(bad([](ScenarioSpec& s) { s.sigma_e2 = -1.0; }));
  EXPECT_TRUE(bad([](ScenarioSpec& s) { s.tau = 1.0; }));
  EXPECT_TRUE(bad([](ScenarioSpec& s) { s.N = 1; }));
  EXPECT_TRUE(bad([](ScenarioSpec& s) { s.B = 1; }));
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

ScenarioSpec small_spec() {
  ScenarioSpec s;
  s.N = 40;
  s.n_i = 4;
  s.reps = 4;
  s.B = 5;
  s.seed = 31;
  s.estimators = {EstimatorKind::oracle, EstimatorKind::marginal, EstimatorKind::canay,
                  EstimatorKind::twostep, EstimatorKind::adjusted};
  s.schemes = {Scheme::rw, Scheme::cw};
  return s;
}

TEST(RunScenario, DeterministicAcrossThreads) {
  const auto spec = small_spec();
  SimOptions one, four;
  four.threads = 4;
  Index calls = 0;
  one.progress = [&](Index done, Index total) {
    ++calls;
    EXPECT_LE(done, total);
  };
  const auto a = run_scenario(spec, one);
  const auto b = run_scenario(spec, four);
  EXPECT_EQ(calls, spec.reps);
  EXPECT_EQ(render_csv(a), render_csv(b));
  EXPECT_EQ(render_text(a), render_text(b));
  for (std::size_t k = 0; k < a.rows.size(); ++k) EXPECT_EQ(a.rows[k].estimates, b.rows[k].estimates);
}

TEST(RunScenario, RowSchema) {
  const auto report = run_scenario(small_spec());
  // Two components per estimator column; adj expands to one column per scheme.
  const std::vector<std::string> labels{"oracle", "marg", "canay", "twostep", "adj(rw)", "adj(cw)"};
  ASSERT_EQ(report.rows.size(), 2 * labels.size());
  const auto [b0, b1] = true_params(report.spec);
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    const auto& row = report.rows[k];
    EXPECT_EQ(row.estimator, labels[k / 2]);
    EXPECT_EQ(row.component, k % 2 ? "beta1" : "beta0");
    EXPECT_EQ(row.truth, k % 2 ? b1 : b0);
    EXPECT_EQ(row.reps_used, 4);
    const double n = static_cast<double>(row.reps_used);
    EXPECT_NEAR(row.rmse * row.rmse, row.bias * row.bias + row.sd * row.sd * (n - 1) / n,
                1e-9 * row.rmse * row.rmse);
    const bool adj = row.estimator.rfind("adj", 0) == 0;
    EXPECT_EQ(std::isnan(row.coverage_basic), !adj);
    EXPECT_EQ(std::isnan(row.coverage_seadj), row.estimator != "adj(rw)");
    if (adj) {
      EXPECT_TRUE(row.coverage_basic >= 0.0 && row.coverage_basic <= 1.0);
    }
  }
}

TEST(RunScenario, ErrorsAndExclusions) {
  auto spec = small_spec();
  spec.seed.reset();
  EXPECT_TRUE(throws_code([&] { run_scenario(spec); }, ErrorCode::config));

  // Canay needs a random intercept only; rejected before any replication runs.
  spec = small_spec();
  spec.sigma_v2 = 0.5;
  spec.estimators = {EstimatorKind::oracle, EstimatorKind::canay};
  EXPECT_TRUE(throws_code([&] { run_scenario(spec); }, ErrorCode::config));
}

}  // namespace
}  // namespace cqr
