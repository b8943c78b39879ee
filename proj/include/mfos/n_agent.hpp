#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mfos/environments.hpp"
#include "mfos/exec.hpp"
#include "mfos/mean_field.hpp"

namespace mfos {

struct AgentState {
  std::size_t x = 0;
  bool alive = true;
};

struct SimulationResult {
  // nu^N_n as counts / N over S (stopped | alive), n = 0..T, taken before the
  // stopping decisions of step n.
  std::vector<std::vector<double>> empirical_extended;
  double realized_cost = 0.0;
  std::vector<int> stopping_times;          // tau^i
  std::vector<std::size_t> stopping_states; // X^i at tau^i
  std::vector<double> stopping_costs;       // Phi(X^i_tau, mu^N_tau)
  std::vector<std::size_t> noise_path;      // shared draws, n = 0..T-1
  double terminal_value = 0.0;              // g(mu^N_T) when present
  std::size_t clamped_outputs = 0;
};

// N agents with initial states drawn i.i.d. from mu0, all playing the same
// policy evaluated on the empirical extended distribution.
SimulationResult simulate(const Environment& env, const Policy& policy, std::size_t N, Rng& rng);
SimulationResult simulate(const Environment& env, const Policy& policy, std::size_t N, Rng& rng,
                          std::span<const double> mu0);

struct StudyRow {
  std::size_t N = 0;
  int time = 0;
  double mean_l2 = 0.0;
  double mean_tv = 0.0;
};

struct StudySummary {
  std::size_t N = 0;
  double mean_l2 = 0.0;       // averaged over time and replications
  double mean_tv = 0.0;
  double mean_cost_gap = 0.0; // |realized cost - J|
  double t0_tv = 0.0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<StudySummary> summary;
  double slope_l2 = 0.0;  // least-squares slope of log(mean L2) vs log(N)
  double slope_tv = 0.0;
};

StudyResult convergence_study(const Environment& env, const Policy& policy, std::span<const std::size_t> Ns,
                              int reps, const Rng& rng, Exec exec = Exec::parallel);
StudyResult convergence_study(const Environment& env, const Policy& policy, std::span<const std::size_t> Ns,
                              int reps, const Rng& rng, std::span<const double> mu0, Exec exec = Exec::parallel);

// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

// N, time, mean L2, mean TV, mean cost gap; then summary rows and the slope.
void write_study_csv(std::ostream& out, const StudyResult& study);

}  // namespace mfos
