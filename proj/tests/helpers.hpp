#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mfos/core.hpp"
#include "mfos/environments.hpp"
#include "mfos/mean_field.hpp"

namespace mfos::testing {

// Optimal ex1 rule from delta_0: stop 1/(T+1-n) of the mass sitting at x = n.
inline Policy ex1_optimal_policy(int horizon) {
  return [horizon](int n, const ExtendedDistribution& nu) {
    std::vector<double> h(nu.num_states(), 0.0);
    if (n < static_cast<int>(h.size())) h[static_cast<std::size_t>(n)] = 1.0 / (horizon + 1 - n);
    return h;
  };
}

inline std::vector<double> row(const Matrix& q, std::size_t x) {
  std::vector<double> r(static_cast<std::size_t>(q.cols()));
  for (Eigen::Index j = 0; j < q.cols(); ++j) r[static_cast<std::size_t>(j)] = q(static_cast<Eigen::Index>(x), j);
  return r;
}

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Random extended distribution with both slices populated.
inline ExtendedDistribution random_extended(Rng& rng, std::size_t ns) {
  return ExtendedDistribution(sample_simplex(rng, 2 * ns));
}

}  // namespace mfos::testing
