#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfos/core.hpp"
#include "mfos/linalg.hpp"

namespace mfos {

using NoiseValue = std::optional<std::size_t>;

// Transition kernel Q^mu of the unstopped process: row z is the law of the
// next state from z. mu is the first marginal of the current extended
// distribution (stopped and alive mass together).
using KernelFn = std::function<Matrix(int n, std::span<const double> mu, NoiseValue noise)>;
// Accumulates dL/dmu into grad_mu given dL/dQ.
using KernelVjpFn = std::function<void(int n, std::span<const double> mu, NoiseValue noise,
                                       const Matrix& grad_q, std::span<double> grad_mu)>;
// Phi(x, mu) for every x.
using RunningCostFn = std::function<std::vector<double>(std::span<const double> mu)>;
// Accumulates dL/dmu given dL/dPhi(x) for every x.
using RunningCostVjpFn = std::function<void(std::span<const double> mu, std::span<const double> grad_phi,
                                            std::span<double> grad_mu)>;
using TerminalCostFn = std::function<double(std::span<const double> mu)>;
using TerminalCostVjpFn = std::function<void(std::span<const double> mu, double grad, std::span<double> grad_mu)>;

// Common noise with values {0, ..., cardinality - 1}, one draw per time step.
struct CommonNoise {
  std::size_t cardinality = 0;
  std::function<std::size_t(Rng& rng, int n)> sample;
};

struct TargetDistribution {
  std::vector<double> rho;
};

// One MFOS problem instance. Built through EnvironmentBuilder or one of the
// catalogue constructors below; immutable afterwards.
struct Environment {
  std::string name;
  StateSpace space;
  int horizon = 1;
  KernelFn kernel;
  KernelVjpFn kernel_vjp;           // empty: kernel ignores mu
  RunningCostFn running_cost;
  RunningCostVjpFn running_cost_vjp;  // empty: Phi ignores mu (or is piecewise constant)
  bool kernel_uses_mu = false;
  bool cost_uses_mu = false;
  TerminalCostFn terminal_cost;       // empty: no terminal cost
  TerminalCostVjpFn terminal_cost_vjp;
  std::optional<CommonNoise> common_noise;
  std::vector<double> default_initial;
  bool synchronous_only = false;

  std::size_t num_states() const { return space.size(); }
  bool has_terminal_cost() const { return static_cast<bool>(terminal_cost); }
  bool has_common_noise() const { return common_noise.has_value(); }
  // Phi and Q independent of the population and no common noise or terminal
  // cost: the problem decouples into single-agent optimal stopping.
  bool mean_field_free() const {
    return !kernel_uses_mu && !cost_uses_mu && !has_terminal_cost() && !has_common_noise();
  }
};

// Generic builder; checks the invariants the engine relies on.
class EnvironmentBuilder {
 public:
  EnvironmentBuilder(std::string name, StateSpace space, int horizon);

  EnvironmentBuilder& kernel(KernelFn fn, KernelVjpFn vjp = {});
  EnvironmentBuilder& running_cost(RunningCostFn fn, RunningCostVjpFn vjp = {}, bool uses_mu = true);
  EnvironmentBuilder& terminal_cost(TerminalCostFn fn, TerminalCostVjpFn vjp);
  EnvironmentBuilder& common_noise(CommonNoise noise);
  EnvironmentBuilder& default_initial(std::vector<double> mu0);
  EnvironmentBuilder& synchronous_only(bool flag);
  EnvironmentBuilder& kernel_uses_mu(bool flag);

  Environment build() const;

 private:
  Environment env_;
};

// Throws unless every row is a probability vector within tol.
void check_row_stochastic(const Matrix& q, double tol = 1e-12);

// Same environment with a different horizon (used for truncated instances
// and the degenerate T = 0 case).
Environment with_horizon(Environment env, int horizon);

Environment env_towards_uniform_1d();
Environment env_roll_die();
Environment env_congestion(double c_cong = 0.8);
Environment env_distributional();
Environment env_towards_uniform_2d();
Environment env_drones(const TargetDistribution& target);
Environment env_randomized_better();

TargetDistribution letter_target(char letter);
TargetDistribution parse_letter_bitmap(std::string_view text);
std::string letter_bitmap(char letter);

// Environment by CLI name: ex1..ex5, ex6-M/F/O/S, randomized-better.
Environment make_environment(std::string_view name);
std::vector<std::string> environment_names();

}  // namespace mfos
