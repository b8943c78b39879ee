#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mfos/core.hpp"
#include "mfos/environments.hpp"
#include "mfos/exec.hpp"
#include "mfos/linalg.hpp"

namespace mfos {

// A stopping policy: raw stopping probabilities at time n given the current
// extended distribution. One entry means a synchronous rule, |X| entries a
// per-state rule.
using Policy = std::function<std::vector<double>(int n, const ExtendedDistribution& nu)>;

// Converts raw policy output to a rule. Values within 1e-6 of [0,1] are
// clamped (and counted); anything further out is an error.
StoppingRule make_rule(std::span<const double> raw, std::size_t num_states, std::size_t* clamp_count = nullptr);

// nu'(x,0) = nu(x,0) + nu(x,1) h(x);  nu'(x,1) = sum_z nu(z,1) (1 - h(z)) q(z,x).
ExtendedDistribution mf_step(const ExtendedDistribution& nu, const StoppingRule& h, const Matrix& q);

// sum_x nu(x,1) phi(x) h(x), with phi = Phi(., mu).
double one_step_cost(const ExtendedDistribution& nu, const StoppingRule& h, std::span<const double> phi);
double one_step_cost(const Environment& env, const ExtendedDistribution& nu, const StoppingRule& h);

struct Trajectory {
  int start_time = 0;
  std::vector<ExtendedDistribution> distributions;  // nu_start .. nu_T
  std::vector<StoppingRule> rules;                  // h_start .. h_T, h_T = 1
  std::vector<double> step_costs;                   // l_start .. l_T
  std::optional<double> terminal_value;
  std::vector<std::size_t> noise_path;              // indexed by absolute time 0..T-1
  std::optional<ExtendedDistribution> final_distribution;  // after the forced stop at T
  std::size_t clamped_outputs = 0;

  double total_cost() const;
};

// Common-noise draws for times 0..T-1 (empty for noise-free environments).
std::vector<std::size_t> sample_noise_path(const Environment& env, Rng& rng);

// Propagates nu from start_time to T under the policy. h_T is forced to 1.
// noise_path must hold T values when the environment has common noise.
Trajectory rollout(const Environment& env, const Policy& policy, const ExtendedDistribution& nu0,
                   std::span<const std::size_t> noise_path = {}, int start_time = 0);
Trajectory rollout(const Environment& env, const Policy& policy, const ExtendedDistribution& nu0, Rng& rng,
                   int start_time = 0);

// J(p): exact for noise-free environments (mc_paths must be 1), otherwise the
// mean over mc_paths common-noise paths drawn from rng.split(path).
double social_cost(const Environment& env, const Policy& policy, const ExtendedDistribution& nu0, const Rng& rng,
                   std::size_t mc_paths = 1, int start_time = 0, Exec exec = Exec::parallel);

// Trajectory as CSV: n, stopped/alive masses per state, rule, step cost.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const StateSpace& space);

// Handy fixed policies.
Policy constant_policy(std::vector<double> raw);
Policy schedule_policy(std::vector<std::vector<double>> per_time);

}  // namespace mfos
