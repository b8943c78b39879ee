#include "mfos/mean_field.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mfos {

namespace {

constexpr double kPolicyTolerance = 1e-6;

void check_sizes(const ExtendedDistribution& nu, const StoppingRule& h, std::size_t q_size) {
  const std::size_t n = nu.num_states();
  if (q_size != n) throw std::invalid_argument("mf_step: kernel size does not match the state space");
  if (!h.is_synchronous() && h.values().size() != n)
    throw std::invalid_argument("stopping rule size does not match the state space");
}

NoiseValue noise_at(const Environment& env, std::span<const std::size_t> path, int n) {
  if (!env.has_common_noise()) return std::nullopt;
  return path[static_cast<std::size_t>(n)];
}

// F-bar with h = 1: the kernel plays no role.
ExtendedDistribution stop_everyone(const ExtendedDistribution& nu) {
  const std::size_t n = nu.num_states();
  std::vector<double> out(2 * n, 0.0);
  for (std::size_t x = 0; x < n; ++x) out[x] = nu.stopped(x) + nu.alive(x);
  return ExtendedDistribution(std::move(out));
}

}  // namespace

StoppingRule make_rule(std::span<const double> raw, std::size_t num_states, std::size_t* clamp_count) {
  if (raw.size() != 1 && raw.size() != num_states)
    throw std::invalid_argument("policy returned " + std::to_string(raw.size()) + " values for " +
                                std::to_string(num_states) + " states");
  std::vector<double> probs(raw.begin(), raw.end());
  for (double& p : probs) {
    if (!std::isfinite(p) || p < -kPolicyTolerance || p > 1.0 + kPolicyTolerance)
      throw std::domain_error("policy output " + std::to_string(p) + " outside [0,1]");
    if (p < 0.0 || p > 1.0) {
      p = p < 0.0 ? 0.0 : 1.0;
      if (clamp_count) ++*clamp_count;
    }
  }
  if (probs.size() == 1 && num_states != 1) return StoppingRule::synchronous(probs.front());
  return StoppingRule::per_state(std::move(probs));
}

ExtendedDistribution mf_step(const ExtendedDistribution& nu, const StoppingRule& h, const Matrix& q) {
  check_sizes(nu, h, static_cast<std::size_t>(q.rows()));
  if (q.cols() != q.rows()) throw std::invalid_argument("mf_step: kernel must be square");
  const std::size_t n = nu.num_states();
  std::vector<double> out(2 * n, 0.0);
  for (std::size_t z = 0; z < n; ++z) {
    const double hz = h.at(z);
    out[z] = nu.stopped(z) + nu.alive(z) * hz;
    const double w = nu.alive(z) * (1.0 - hz);
    if (w == 0.0) continue;
    for (std::size_t x = 0; x < n; ++x) out[n + x] += w * q(z, x);
  }
  return ExtendedDistribution(std::move(out));
}

double one_step_cost(const ExtendedDistribution& nu, const StoppingRule& h, std::span<const double> phi) {
  const std::size_t n = nu.num_states();
  if (phi.size() != n) throw std::invalid_argument("one_step_cost: cost vector size mismatch");
  if (!h.is_synchronous() && h.values().size() != n)
    throw std::invalid_argument("one_step_cost: rule size mismatch");
  double total = 0.0;
  for (std::size_t x = 0; x < n; ++x) total += nu.alive(x) * phi[x] * h.at(x);
  return total;
}

double one_step_cost(const Environment& env, const ExtendedDistribution& nu, const StoppingRule& h) {
  const auto mu = marginal(nu);
  return one_step_cost(nu, h, env.running_cost(mu));
}

double Trajectory::total_cost() const {
  double total = 0.0;
  for (double c : step_costs) total += c;
  if (terminal_value) total += *terminal_value;
  return total;
}

std::vector<std::size_t> sample_noise_path(const Environment& env, Rng& rng) {
  std::vector<std::size_t> path;
  if (!env.has_common_noise()) return path;
  path.reserve(static_cast<std::size_t>(env.horizon));
  for (int n = 0; n < env.horizon; ++n) path.push_back(env.common_noise->sample(rng, n));
  return path;
}

Trajectory rollout(const Environment& env, const Policy& policy, const ExtendedDistribution& nu0,
                   std::span<const std::size_t> noise_path, int start_time) {
  const std::size_t ns = env.num_states();
  const int horizon = env.horizon;
  if (nu0.num_states() != ns) throw std::invalid_argument("rollout: initial distribution has wrong size");
  if (start_time < 0 || start_time > horizon) throw std::invalid_argument("rollout: start time outside [0, T]");
  if (env.has_common_noise() && noise_path.size() != static_cast<std::size_t>(horizon))
    throw std::invalid_argument("rollout: noise path must hold T = " + std::to_string(horizon) + " values");
  if (!env.has_common_noise() && !noise_path.empty())
    throw std::invalid_argument("rollout: noise path given for a noise-free environment");

  Trajectory traj;
  traj.start_time = start_time;
  traj.noise_path.assign(noise_path.begin(), noise_path.end());
  ExtendedDistribution nu = nu0;
  for (int n = start_time; n <= horizon; ++n) {
    StoppingRule h = n == horizon ? StoppingRule::stop_all(ns)
                                  : make_rule(policy(n, nu), ns, &traj.clamped_outputs);
    const auto mu = marginal(nu);
    traj.step_costs.push_back(one_step_cost(nu, h, env.running_cost(mu)));
    ExtendedDistribution next = n == horizon ? stop_everyone(nu) : mf_step(nu, h, env.kernel(n, mu, noise_at(env, noise_path, n)));
    traj.distributions.push_back(std::move(nu));
    traj.rules.push_back(std::move(h));
    nu = std::move(next);
  }
  if (env.has_terminal_cost()) traj.terminal_value = env.terminal_cost(marginal(nu));
  traj.final_distribution = std::move(nu);
  return traj;
}

Trajectory rollout(const Environment& env, const Policy& policy, const ExtendedDistribution& nu0, Rng& rng,
                   int start_time) {
  const auto path = sample_noise_path(env, rng);
  return rollout(env, policy, nu0, path, start_time);
}

double social_cost(const Environment& env, const Policy& policy, const ExtendedDistribution& nu0, const Rng& rng,
                   std::size_t mc_paths, int start_time, Exec exec) {
  if (mc_paths == 0) throw std::invalid_argument("social_cost: mc_paths must be positive");
  if (!env.has_common_noise()) {
    if (mc_paths != 1) throw std::invalid_argument("social_cost: mc_paths must be 1 without common noise");
    return rollout(env, policy, nu0, std::span<const std::size_t>{}, start_time).total_cost();
  }
  std::vector<double> costs(mc_paths, 0.0);
  const auto run_path = [&](std::size_t p) {
    Rng stream = rng.split(p);
    costs[p] = rollout(env, policy, nu0, stream, start_time).total_cost();
  };
  const auto count = static_cast<std::int64_t>(mc_paths);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t p = 0; p < count; ++p) run_path(static_cast<std::size_t>(p));
  } else {
    for (std::int64_t p = 0; p < count; ++p) run_path(static_cast<std::size_t>(p));
  }
  double total = 0.0;
  for (double c : costs) total += c;
  return total / static_cast<double>(mc_paths);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const StateSpace& space) {
  const std::size_t ns = space.size();
  out << "# mfos-trajectory v1\n";
  out << "n";
  for (std::size_t x = 0; x < ns; ++x) out << ",stopped_" << space.label(x);
  for (std::size_t x = 0; x < ns; ++x) out << ",alive_" << space.label(x);
  for (std::size_t x = 0; x < ns; ++x) out << ",h_" << space.label(x);
  out << ",step_cost,noise\n";
  out.precision(17);
  for (std::size_t i = 0; i < traj.distributions.size(); ++i) {
    const int n = traj.start_time + static_cast<int>(i);
    out << n;
    for (double m : traj.distributions[i].mass()) out << ',' << m;
    for (std::size_t x = 0; x < ns; ++x) out << ',' << traj.rules[i].at(x);
    out << ',' << traj.step_costs[i] << ',';
    if (static_cast<std::size_t>(n) < traj.noise_path.size()) out << traj.noise_path[static_cast<std::size_t>(n)];
    out << '\n';
  }
  if (traj.final_distribution) {
    out << "final";
    for (double m : traj.final_distribution->mass()) out << ',' << m;
    for (std::size_t x = 0; x < ns; ++x) out << ',';
    out << ',' << traj.terminal_value.value_or(0.0) << ",\n";
  }
}

Policy constant_policy(std::vector<double> raw) {
  return [raw = std::move(raw)](int, const ExtendedDistribution&) { return raw; };
}

Policy schedule_policy(std::vector<std::vector<double>> per_time) {
  return [per_time = std::move(per_time)](int n, const ExtendedDistribution&) {
    if (n < 0 || static_cast<std::size_t>(n) >= per_time.size())
      throw std::out_of_range("schedule_policy: no rule for time " + std::to_string(n));
    return per_time[static_cast<std::size_t>(n)];
  };
}

}  // namespace mfos
