#pragma once

#include "cqr/types.hpp"

namespace cqr {

/// Nodes and weights for expectations under N(0, 1):
/// sum_k weights(k) g(nodes(k)) ~ E[g(U)].
struct QuadratureRule {
  VectorXd nodes;
  VectorXd weights;
};

/// Gauss-Hermite rule with nK points, 1 <= nK <= 64, rescaled to the
/// standard normal. Weights sum to one and nodes are exactly symmetric.
QuadratureRule gauss_hermite(int nK);

/// Tensor product of a one-dimensional rule over `dim` coordinates. Row k of
/// `nodes` is the k-th grid point; the first coordinate varies slowest.
struct TensorRule {
  MatrixXd nodes;  // K^dim x dim
  VectorXd log_weights;
};

TensorRule tensor_rule(const QuadratureRule& rule, int dim);

}  // namespace cqr
