#pragma once

#include <string>

#include "cqr/data.hpp"

namespace cqr {

struct Diagnostics {
  Index n_clusters = 0;
  Index n_obs = 0;
  Index min_size = 0;
  double median_size = 0.0;
  Index max_size = 0;
  /// Numerical rank of the stacked fixed design.
  Index rank = 0;
  bool rank_deficient = false;
  Index singletons = 0;
};

/// Summary of cluster sizes and design rank. Never throws on a valid dataset;
/// rank deficiency is reported, not raised.
Diagnostics validate(const ClusteredDataset& data);

std::string to_text(const Diagnostics& diagnostics);

}  // namespace cqr
