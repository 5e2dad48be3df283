#include "cqr/diagnostics.hpp"

#include <algorithm>
#include <sstream>

#include <Eigen/QR>

namespace cqr {

Diagnostics validate(const ClusteredDataset& data) {
  Diagnostics d;
  d.n_clusters = data.n_clusters();
  d.n_obs = data.n_obs();
  std::vector<Index> sizes = data.cluster_sizes();
  std::sort(sizes.begin(), sizes.end());
  d.min_size = sizes.front();
  d.max_size = sizes.back();
  const std::size_t m = sizes.size();
  d.median_size = m % 2 ? static_cast<double>(sizes[m / 2])
                        : 0.5 * static_cast<double>(sizes[m / 2 - 1] + sizes[m / 2]);
  d.singletons = std::count(sizes.begin(), sizes.end(), Index{1});

  Eigen::ColPivHouseholderQR<MatrixXd> qr(data.X());
  qr.setThreshold(1e-10);
  d.rank = qr.rank();
  d.rank_deficient = d.rank < data.p();
  return d;
}

std::string to_text(const Diagnostics& d) {
  std::ostringstream out;
  out << "clusters=" << d.n_clusters << " observations=" << d.n_obs
      << " cluster_size[min/median/max]=" << d.min_size << "/" << d.median_size << "/"
      << d.max_size << " rank=" << d.rank << (d.rank_deficient ? " (rank deficient)" : "")
      << " singletons=" << d.singletons;
  return out.str();
}

}  // namespace cqr
