#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <string>
#include <vector>

#include "cqr/data.hpp"
#include "cqr/random.hpp"
#include "cqr/simulation.hpp"

namespace cqr::test {

/// Asserts that f throws cqr::Error with the given code.
inline ::testing::AssertionResult throws_code(const std::function<void()>& f, ErrorCode code) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == code) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure()
           << "got " << error_code_name(e.code()) << ": " << e.what();
  }
  return ::testing::AssertionFailure() << "no error raised";
}

/// Dataset with an intercept plus the given covariate columns and a random
/// intercept. Cluster ids are "c0", "c1", ...
inline ClusteredDataset make_dataset(const std::vector<Index>& sizes, const VectorXd& y,
                                     const MatrixXd& covariates = MatrixXd(),
                                     std::vector<Index> z_columns = {0}) {
  const Index n = y.size();
  const Index extra = covariates.size() == 0 ? 0 : covariates.cols();
  MatrixXd X(n, 1 + extra);
  X.col(0).setOnes();
  if (extra) X.rightCols(extra) = covariates;
  std::vector<std::string> ids, names{kInterceptName};
  for (std::size_t i = 0; i < sizes.size(); ++i) ids.push_back("c" + std::to_string(i));
  for (Index k = 0; k < extra; ++k) names.push_back("x" + std::to_string(k + 1));
  return ClusteredDataset(ids, sizes, y, X, std::move(z_columns), names);
}

/// Benchmark-design data drawn from a fixed seed.
inline SimulatedData benchmark_data(std::uint64_t seed, Index N = 500, Index n_i = 6,
                                    double tau = 0.1) {
  ScenarioSpec spec;
  spec.N = N;
  spec.n_i = n_i;
  spec.tau = tau;
  Rng rng{RngKey(seed)};
  return gen_dataset(spec, rng);
}

/// Reverses cluster order and returns the permutation used.
inline std::vector<Index> reversed(Index N) {
  std::vector<Index> order(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = N - 1 - i;
  return order;
}

/// A fixed pseudo-random permutation of 0..N-1.
inline std::vector<Index> shuffled(Index N, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng{RngKey(seed)};
  for (Index i = N - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_index(i + 1))]);
  return order;
}

}  // namespace cqr::test
