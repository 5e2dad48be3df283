#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "cqr/lqmm.hpp"
#include "cqr/nelder_mead.hpp"
#include "cqr/qr.hpp"
#include "cqr/quadrature.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cqr {
namespace {

using test::throws_code;

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

TEST(GaussHermite, Moments) {
  const auto rule = gauss_hermite(15);
  ASSERT_EQ(rule.nodes.size(), 15);
  EXPECT_NEAR(rule.weights.sum(), 1.0, 1e-12);
  EXPECT_NEAR(rule.weights.dot(rule.nodes.array().square().matrix()), 1.0, 1e-12);
  EXPECT_NEAR(rule.weights.dot(rule.nodes.array().exp().matrix()), std::exp(0.5), 1e-8);
  EXPECT_NEAR(rule.weights.dot(rule.nodes.array().pow(4).matrix()), 3.0, 1e-11);
  for (Index k = 0; k < 15; ++k) EXPECT_EQ(rule.nodes(k), -rule.nodes(14 - k));
  EXPECT_EQ(rule.nodes(7), 0.0);
}

TEST(GaussHermite, AllSizes) {
  for (int nK = 1; nK <= 64; ++nK) {
    const auto rule = gauss_hermite(nK);
    ASSERT_EQ(rule.nodes.size(), nK);
    EXPECT_NEAR(rule.weights.sum(), 1.0, 1e-12) << nK;
    EXPECT_TRUE((rule.weights.array() > 0.0).all()) << nK;
    if (nK >= 2) {
      EXPECT_NEAR(rule.weights.dot(rule.nodes.array().square().matrix()), 1.0, 1e-10);
    }
  }
  EXPECT_TRUE(throws_code([] { gauss_hermite(0); }, ErrorCode::invalid_argument));
  EXPECT_TRUE(throws_code([] { gauss_hermite(65); }, ErrorCode::invalid_argument));
}

TEST(GaussHermite, TensorRule) {
  const auto rule = tensor_rule(gauss_hermite(5), 2);
  ASSERT_EQ(rule.nodes.rows(), 25);
  EXPECT_NEAR(rule.log_weights.array().exp().sum(), 1.0, 1e-12);
  // First coordinate varies slowest.
  EXPECT_EQ(rule.nodes(0, 0), rule.nodes(4, 0));
  EXPECT_NE(rule.nodes(0, 1), rule.nodes(1, 1));
  // E[U1^2 U2^2] = 1 for independent standard normals.
  double m = 0.0;
  for (Index g = 0; g < 25; ++g)
    m += std::exp(rule.log_weights(g)) * std::pow(rule.nodes(g, 0) * rule.nodes(g, 1), 2);
  EXPECT_NEAR(m, 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

TEST(NelderMead, Rosenbrock) {
  auto f = [](const VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  NelderMeadOptions options;
  options.tolerance = 1e-12;
  const auto r = nelder_mead(f, VectorXd::Constant(2, -1.2), options);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-3);
  EXPECT_NEAR(r.x(1), 1.0, 1e-3);
}

TEST(NelderMead, QuadraticInSixDimensions) {
  VectorXd target(6);
  target << 1, -2, 3, 0.5, 0, 4;
  auto f = [&](const VectorXd& x) { return (x - target).squaredNorm(); };
  NelderMeadOptions options;
  options.tolerance = 1e-14;
  const auto r = nelder_mead(f, VectorXd::Zero(6), options);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.x - target).norm(), 1e-4);
  EXPECT_LE(r.evaluations, 2000 * 6);
}

TEST(NelderMead, NonFiniteTreatedAsInfinity) {
  // Minimum at log 2; undefined for negative arguments.
  auto f = [](const VectorXd& x) { return x(0) < 0.0 ? std::nan("") : std::exp(x(0)) - 2.0 * x(0); };
  const auto r = nelder_mead(f, VectorXd::Constant(1, 0.05));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), std::log(2.0), 1e-2);
}

TEST(NelderMead, BudgetExhaustionReported) {
  auto f = [](const VectorXd& x) { return x.squaredNorm(); };
  NelderMeadOptions options;
  options.max_evaluations = 10;
  const auto r = nelder_mead(f, VectorXd::Constant(3, 5.0), options);
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.evaluations, 10 + 4);
  EXPECT_TRUE(throws_code([&] { nelder_mead(f, VectorXd()); }, ErrorCode::invalid_argument));
}

// ---------------------------------------------------------------------------
// Asymmetric Laplace density
// ---------------------------------------------------------------------------

TEST(AldLogpdf, Examples) {
  EXPECT_NEAR(ald_logpdf(0.7, {0.7, 1.0, 0.1}), std::log(0.09), 1e-14);
  EXPECT_NEAR(ald_logpdf(0.7, {0.7, 1.0, 0.1}), -2.40795, 1e-5);
  EXPECT_NEAR(ald_logpdf(2.0, {0.0, 1.0, 0.5}), std::log(0.25) - 1.0, 1e-14);
  EXPECT_NEAR(ald_logpdf(2.0, {0.0, 1.0, 0.5}), -2.38629, 1e-5);
}

TEST(AldLogpdf, IntegratesToOne) {
  boost::math::quadrature::exp_sinh<double> half_line;
  for (double tau : {0.05, 0.1, 0.5, 0.8}) {
    for (double sigma : {0.3, 1.0, 2.5}) {
      const AldParams params{0.4, sigma, tau};
      const double right =
          half_line.integrate([&](double t) { return std::exp(ald_logpdf(0.4 + t, params)); });
      const double left =
          half_line.integrate([&](double t) { return std::exp(ald_logpdf(0.4 - t, params)); });
      EXPECT_NEAR(left + right, 1.0, 1e-6) << tau << " " << sigma;
    }
  }
}

// ---------------------------------------------------------------------------
// Marginal likelihood and predictions
// ---------------------------------------------------------------------------

TEST(MarginalLoglik, ZeroScaleIsIndependenceLikelihood) {
  const auto sim = test::benchmark_data(21, 30, 4, 0.3);
  VectorXd beta(2);
  beta << -0.2, 0.9;
  const double sigma = 0.7;
  double expected = 0.0;
  for (Index r = 0; r < sim.data.n_obs(); ++r)
    expected += ald_logpdf(sim.data.y()(r), {sim.data.X().row(r).dot(beta), sigma, 0.3});
  const double got =
      marginal_loglik(beta, sigma, ReScale::scalar(0.0), sim.data, QuantileLevel(0.3), 15);
  EXPECT_NEAR(got, expected, 1e-10 * std::abs(expected));
}

TEST(MarginalLoglik, MatchesFineGridOracle) {
  for (const auto& toy : oracle::toy_battery()) {
    const auto exact = oracle::integrate_cluster(toy.residuals, toy.sigma, toy.phi, toy.tau);
    const VectorXd beta = VectorXd::Constant(1, toy.beta0);
    const double ll = marginal_loglik(beta, toy.sigma, ReScale::scalar(toy.phi), toy.data,
                                      QuantileLevel(toy.tau), 15);
    EXPECT_NEAR(ll, exact.loglik, 1e-6) << toy.data.id(0);
    const auto blp = predict_blp(beta, toy.sigma, ReScale::scalar(toy.phi), toy.data,
                                 QuantileLevel(toy.tau), 15);
    EXPECT_NEAR(blp(0, 0), exact.posterior_mean, 1e-6) << toy.data.id(0);
  }
}

TEST(MarginalLoglik, TwoClusterToyMatchesOracle) {
  const std::vector<double> a{5.5, -6.25}, b{-7.0, 8.0};
  const double sigma = 1.5, phi = 0.5, tau = 0.25, beta0 = 0.3;
  VectorXd y(4);
  y << beta0 + a[0], beta0 + a[1], beta0 + b[0], beta0 + b[1];
  const ClusteredDataset two({"a", "b"}, {2, 2}, y, MatrixXd::Ones(4, 1), {0}, {kInterceptName});
  const double expected = oracle::integrate_cluster(a, sigma, phi, tau).loglik +
                          oracle::integrate_cluster(b, sigma, phi, tau).loglik;
  EXPECT_NEAR(marginal_loglik(VectorXd::Constant(1, beta0), sigma, ReScale::scalar(phi), two,
                              QuantileLevel(tau), 15),
              expected, 1e-6);
}

TEST(MarginalLoglik, AdditiveOverClusters) {
  const auto sim = test::benchmark_data(22, 25, 5);
  std::vector<Index> doubled;
  for (Index i = 0; i < 25; ++i) {
    doubled.push_back(i);
    doubled.push_back(i);
  }
  const auto twice = sim.data.take_clusters(doubled, true);
  VectorXd beta(2);
  beta << -0.3, 0.5;
  const auto s = ReScale::scalar(0.9);
  const double one = marginal_loglik(beta, 0.4, s, sim.data, QuantileLevel(0.1), 15);
  const double two = marginal_loglik(beta, 0.4, s, twice, QuantileLevel(0.1), 15);
  EXPECT_NEAR(two, 2.0 * one, 1e-12 * std::abs(one));
  const VectorXd per = cluster_loglik(beta, 0.4, s, twice, QuantileLevel(0.1), 15);
  for (Index i = 0; i < 25; ++i) EXPECT_EQ(per(2 * i), per(2 * i + 1));
}

TEST(MarginalLoglik, Errors) {
  const auto sim = test::benchmark_data(23, 5, 3);
  EXPECT_TRUE(throws_code(
      [&] { marginal_loglik(VectorXd::Zero(3), 1.0, ReScale::scalar(1.0), sim.data, QuantileLevel(0.5), 15); },
      ErrorCode::invalid_argument));
  EXPECT_TRUE(throws_code(
      [&] { marginal_loglik(VectorXd::Zero(2), -1.0, ReScale::scalar(1.0), sim.data, QuantileLevel(0.5), 15); },
      ErrorCode::invalid_argument));
}

TEST(PredictBlp, ZeroResidualsGiveZeroAtMedian) {
  VectorXd y(4);
  y << 0.5, 1.5, 2.5, 3.5;
  MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  const auto d = test::make_dataset({4}, y, x);
  VectorXd beta(2);
  beta << 0.5, 1.0;
  for (auto method : {BlpMethod::posterior_mean, BlpMethod::linear}) {
    const auto u = predict_blp(beta, 0.8, ReScale::scalar(1.3), d, QuantileLevel(0.5), 15, method);
    EXPECT_NEAR(u(0, 0), 0.0, 1e-10);
  }
}

TEST(PredictBlp, ShrinksTowardZero) {
  const auto sim = test::benchmark_data(24);
  const auto fit = fit_lqmm(sim.data, QuantileLevel(0.1));
  for (auto method : {BlpMethod::posterior_mean, BlpMethod::linear}) {
    const auto raw = predict_blp(fit.beta, fit.sigma, fit.re_scale, sim.data, QuantileLevel(0.1),
                                 15, method);
    const auto u_hat = center(raw).col(0);
    const auto u = sim.u_true.col(0);
    const double slope = u.dot(u_hat) / u.squaredNorm();
    EXPECT_LT(slope, 1.0);
    EXPECT_GT(slope, 0.3);
  }
}

TEST(Center, Examples) {
  MatrixXd m(3, 1);
  m << 1, 2, 3;
  const auto c = center(m);
  EXPECT_NEAR(c(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(c(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(c(2, 0), 1.0, 1e-15);
  EXPECT_LT((center(c) - c).cwiseAbs().maxCoeff(), 1e-15);

  Rng rng{RngKey(25)};
  MatrixXd r(37, 2);
  for (Index i = 0; i < r.size(); ++i) r.data()[i] = 100.0 * rng.normal();
  const auto rc = center(r);
  EXPECT_LT(rc.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

TEST(FitLqmm, InvariantsOnModerateData) {
  const auto sim = test::benchmark_data(26, 100, 5);
  const QuantileLevel tau(0.25);
  const auto fit = fit_lqmm(sim.data, tau);
  EXPECT_TRUE(fit.converged);
  EXPECT_LT(fit.blp.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((fit.blp - center(fit.blp_raw)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(fit.loglik, marginal_loglik(fit.beta, fit.sigma, fit.re_scale, sim.data, tau, 15),
              1e-8);

  // No random perturbation of scale 0.1 improves on the optimum.
  Rng rng{RngKey(27)};
  for (int k = 0; k < 64; ++k) {
    VectorXd beta = fit.beta;
    for (Index j = 0; j < beta.size(); ++j) beta(j) += 0.1 * rng.normal();
    const double sigma = fit.sigma * std::exp(0.1 * rng.normal());
    const double phi = fit.re_scale.phi() * std::exp(0.1 * rng.normal());
    EXPECT_LE(marginal_loglik(beta, sigma, ReScale::scalar(phi), sim.data, tau, 15), fit.loglik);
  }
}

TEST(FitLqmm, LabelInvariance) {
  const auto sim = test::benchmark_data(28, 80, 4);
  const auto perm = test::shuffled(80, 3);
  const auto shuffled = sim.data.take_clusters(perm);
  const auto a = fit_lqmm(sim.data, QuantileLevel(0.1));
  const auto b = fit_lqmm(shuffled, QuantileLevel(0.1));
  EXPECT_LT((a.beta - b.beta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(a.sigma, b.sigma, 1e-10);
  EXPECT_NEAR(a.re_scale.phi(), b.re_scale.phi(), 1e-10);
  EXPECT_NEAR(a.loglik, b.loglik, 1e-10);
  for (Index k = 0; k < 80; ++k)
    EXPECT_NEAR(b.blp(k, 0), a.blp(perm[static_cast<std::size_t>(k)], 0), 1e-10);
}

// On benchmark clusters the integrand has kinks narrower than the node
// spacing, so a fixed rule is only approximate; more nodes must help on
// average against the fine-grid oracle.
TEST(MarginalLoglik, MoreNodesApproachOracleOnBenchmarkClusters) {
  const auto sim = test::benchmark_data(29, 60, 6);
  VectorXd beta(2);
  beta << -0.4, 0.56;
  const double sigma = 0.186, phi = 1.07;
  double err15 = 0.0, err64 = 0.0;
  for (Index i = 0; i < 60; ++i) {
    const auto one = sim.data.take_clusters({i});
    const VectorXd r = one.y() - one.X() * beta;
    const auto exact =
        oracle::integrate_cluster({r.data(), r.data() + r.size()}, sigma, phi, 0.1);
    const auto s = ReScale::scalar(phi);
    err15 += std::abs(marginal_loglik(beta, sigma, s, one, QuantileLevel(0.1), 15) - exact.loglik);
    err64 += std::abs(marginal_loglik(beta, sigma, s, one, QuantileLevel(0.1), 64) - exact.loglik);
  }
  EXPECT_LT(err64, err15);
}

TEST(FitLqmm, RandomSlope) {
  ScenarioSpec spec;
  spec.N = 150;
  spec.n_i = 6;
  spec.sigma_v2 = 0.5;
  Rng rng{RngKey(30)};
  const auto sim = gen_dataset(spec, rng);
  ASSERT_EQ(sim.data.q(), 2);
  const auto fit = fit_lqmm(sim.data, QuantileLevel(0.5));
  EXPECT_EQ(fit.blp.cols(), 2);
  EXPECT_GT(fit.re_scale.chol(0, 0), 0.0);
  EXPECT_GT(fit.re_scale.chol(1, 1), 0.0);
  EXPECT_NEAR(fit.loglik,
              marginal_loglik(fit.beta, fit.sigma, fit.re_scale, sim.data, QuantileLevel(0.5), 15),
              1e-8);
  EXPECT_LT(fit.blp.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitLqmm, VanishingScaleRecoversMarginalFit) {
  // Independent data; maximize over (beta, log sigma) with phi held at 1e-6.
  ScenarioSpec spec;
  spec.N = 500;
  spec.n_i = 6;
  spec.sigma_u2 = 1e-12;
  spec.gamma = 0.0;
  Rng rng{RngKey(31)};
  const auto sim = gen_dataset(spec, rng);
  const QuantileLevel tau(0.3);
  auto negloglik = [&](const VectorXd& theta) {
    return -marginal_loglik(theta.head(2), std::exp(theta(2)), ReScale::scalar(1e-6), sim.data,
                            tau, 15);
  };
  QrOptions quiet;
  quiet.compute_se = false;
  const auto marginal = fit_qr(sim.data.y(), sim.data.X(), tau, quiet);
  VectorXd start(3);
  start << 0.0, 0.0, 0.0;
  NelderMeadOptions options;
  options.tolerance = 1e-9;
  const auto r = nelder_mead(negloglik, start, options);
  EXPECT_LT((r.x.head(2) - marginal.beta).cwiseAbs().maxCoeff(), 0.02);
}

TEST(FitLqmm, DegenerateResponsesWarn) {
  const auto d = test::make_dataset({3, 3, 3}, VectorXd::Constant(9, 2.0));
  int warnings = 0;
  set_warning_sink([](const char*, void* count) { ++*static_cast<int*>(count); }, &warnings);
  const auto fit = fit_lqmm(d, QuantileLevel(0.5));
  set_warning_sink(nullptr, nullptr);
  EXPECT_GE(warnings, 1);
  EXPECT_NEAR(fit.beta(0), 2.0, 1e-3);
}

}  // namespace
}  // namespace cqr
