#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mfos/environments.hpp"
#include "mfos/exec.hpp"
#include "mfos/mean_field.hpp"
#include "mfos/network.hpp"

namespace mfos {

// (T + 2) / (2 (T + 1)): optimal value of the 1D towards-uniform problem from delta_0.
double closed_form_ex1(int horizon);

// Backward induction for problems without mean-field coupling:
// V_T = Phi, V_n(x) = min(Phi(x), sum_z q(x,z) V_{n+1}(z)); stop when indifferent.
struct DppSolution {
  std::vector<std::vector<double>> value;  // V_n(x), n = 0..T
  std::vector<std::vector<double>> rules;  // 0/1 stopping rule per time, n = 0..T
  double value_at_mu0 = 0.0;
};
DppSolution single_agent_dpp(const Environment& env);
DppSolution single_agent_dpp(const Environment& env, std::span<const double> mu0);

// Exhaustive search over a uniform grid with M + 1 levels per coordinate,
// followed by one pass over a grid of the same size spanning +-1/M around the
// best point. Coordinates are p_n (synchronous, T of them) or p_n(x)
// (asynchronous, T|X| of them), time-major.
struct GridSearchResult {
  double value = 0.0;
  std::vector<double> point;
  double coarse_value = 0.0;
  std::vector<double> coarse_point;
  std::size_t evaluations = 0;
};
inline constexpr std::size_t kMaxGridPoints = 10'000'000;
GridSearchResult grid_search_policy(const Environment& env, const ExtendedDistribution& nu0, int resolution,
                                    StoppingClass cls, std::span<const std::size_t> noise_path = {},
                                    Exec exec = Exec::parallel, bool refine = true);
// Turns a grid point into a per-time schedule (h_T is forced by rollout anyway).
Policy grid_point_policy(const Environment& env, std::span<const double> point, StoppingClass cls);

struct BoundParams {
  double L_psi = 0.0;
  double L_p = 0.0;
  double L_fbar = 0.0;
  int T = 0;
  std::size_t S_card = 2;
  std::size_t N = 1;

  double K() const { return L_fbar * (1.0 + L_p); }
};

// 2 T L_psi (1 + L_p) [ |S|/(4 sqrt N) (1 - K^T)/(1 - K) + K^T sqrt(|S| - 1)/(2 sqrt N) ],
// with (1 - K^T)/(1 - K) replaced by T when K = 1.
double theorem1_bound(const BoundParams& p);

// sqrt(|S| - 1) / (2 sqrt N).
double lemma1_t0_bound(std::size_t S_card, std::size_t N);

// Largest finite-difference ratios found over random probes; distributions
// are measured in total variation and stopping rules in the sup norm.
struct LipschitzEstimate {
  double L_psi = 0.0;
  double L_p = 0.0;
  double L_fbar = 0.0;
};
LipschitzEstimate estimate_lipschitz(const Environment& env, const Policy& policy, std::size_t probes, Rng& rng);

// CSV of a grid-search result: one row per coordinate, then the value.
void write_grid_search_csv(std::ostream& out, const GridSearchResult& r, StoppingClass cls, const Environment& env);

}  // namespace mfos
