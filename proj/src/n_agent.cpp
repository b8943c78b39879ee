#include "mfos/n_agent.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mfos {

namespace {

std::vector<double> extended_counts(const std::vector<AgentState>& agents, std::size_t ns) {
  std::vector<double> nu(2 * ns, 0.0);
  for (const auto& a : agents) nu[(a.alive ? ns : 0) + a.x] += 1.0;
  const double n = static_cast<double>(agents.size());
  for (double& v : nu) v /= n;
  return nu;
}

std::vector<double> cumulative(std::span<const double> p) {
  std::vector<double> c(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) c[i] = acc += p[i];
  return c;
}

}  // namespace

SimulationResult simulate(const Environment& env, const Policy& policy, std::size_t N, Rng& rng) {
  return simulate(env, policy, N, rng, env.default_initial);
}

SimulationResult simulate(const Environment& env, const Policy& policy, std::size_t N, Rng& rng,
                          std::span<const double> mu0) {
  if (N == 0) throw std::invalid_argument("simulate: N must be at least 1");
  const std::size_t ns = env.num_states();
  validate_probability_vector(mu0, 1e-9, "mu0");
  if (mu0.size() != ns) throw std::invalid_argument("simulate: mu0 has the wrong size");

  SimulationResult res;
  std::vector<AgentState> agents(N);
  const auto init = cumulative(mu0);
  for (auto& a : agents) a.x = rng.categorical(init);
  res.stopping_times.assign(N, -1);
  res.stopping_states.assign(N, 0);
  res.stopping_costs.assign(N, 0.0);

  double total = 0.0;
  for (int n = 0; n <= env.horizon; ++n) {
    const auto nu_vec = extended_counts(agents, ns);
    res.empirical_extended.push_back(nu_vec);
    const ExtendedDistribution nu(nu_vec);
    const auto mu = marginal(nu);
    const auto phi = env.running_cost(mu);
    const bool last = n == env.horizon;
    std::vector<double> h(ns, 1.0);
    std::vector<std::vector<double>> rows;
    if (!last) {
      h = make_rule(policy(n, nu), ns, &res.clamped_outputs).expand(ns);
      NoiseValue noise;
      if (env.has_common_noise()) {
        noise = env.common_noise->sample(rng, n);
        res.noise_path.push_back(*noise);
      }
      const Matrix q = env.kernel(n, mu, noise);
      rows.resize(ns);
      for (std::size_t x = 0; x < ns; ++x) {
        std::vector<double> r(ns);
        for (std::size_t z = 0; z < ns; ++z) r[z] = q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z));
        rows[x] = cumulative(r);
      }
    }
    // Decisions use the measure frozen at the start of the step.
    for (std::size_t i = 0; i < N; ++i) {
      AgentState& a = agents[i];
      if (!a.alive) continue;
      if (last || rng.bernoulli(h[a.x])) {
        a.alive = false;
        res.stopping_times[i] = n;
        res.stopping_states[i] = a.x;
        res.stopping_costs[i] = phi[a.x];
        total += phi[a.x];
      } else {
        a.x = rng.categorical(rows[a.x]);
      }
    }
  }
  res.realized_cost = total / static_cast<double>(N);
  if (env.has_terminal_cost()) {
    res.terminal_value = env.terminal_cost(marginal(ExtendedDistribution(extended_counts(agents, ns))));
    res.realized_cost += res.terminal_value;
  }
  return res;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: x values are all equal");
  return sxy / sxx;
}

StudyResult convergence_study(const Environment& env, const Policy& policy, std::span<const std::size_t> Ns, int reps,
                              const Rng& rng, Exec exec) {
  return convergence_study(env, policy, Ns, reps, rng, env.default_initial, exec);
}

StudyResult convergence_study(const Environment& env, const Policy& policy, std::span<const std::size_t> Ns, int reps,
                              const Rng& rng, std::span<const double> mu0, Exec exec) {
  if (Ns.empty()) throw std::invalid_argument("convergence_study: no agent counts given");
  if (reps < 1) throw std::invalid_argument("convergence_study: reps must be at least 1");
  const auto steps = static_cast<std::size_t>(env.horizon) + 1;
  const auto nu0 = initial_extend(mu0);
  // Noise-free flows are shared by all replications.
  std::optional<Trajectory> shared;
  if (!env.has_common_noise()) shared = rollout(env, policy, nu0);

  struct RepStats {
    std::vector<double> l2, tv;
    double gap = 0.0;
  };
  StudyResult study;
  for (std::size_t ni = 0; ni < Ns.size(); ++ni) {
    const std::size_t N = Ns[ni];
    std::vector<RepStats> stats(static_cast<std::size_t>(reps));
    const auto run = [&](int r) {
      Rng stream = rng.split((static_cast<std::uint64_t>(ni) << 32) | static_cast<std::uint64_t>(r));
      const SimulationResult sim = simulate(env, policy, N, stream, mu0);
      const Trajectory traj = shared ? *shared : rollout(env, policy, nu0, sim.noise_path);
      RepStats& s = stats[static_cast<std::size_t>(r)];
      for (std::size_t t = 0; t < steps; ++t) {
        s.l2.push_back(l2_distance(sim.empirical_extended[t], traj.distributions[t].mass()));
        s.tv.push_back(tv_distance(sim.empirical_extended[t], traj.distributions[t].mass()));
      }
      s.gap = std::abs(sim.realized_cost - traj.total_cost());
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
      for (int r = 0; r < reps; ++r) run(r);
    } else {
      for (int r = 0; r < reps; ++r) run(r);
    }
    StudySummary sum;
    sum.N = N;
    const double inv = 1.0 / reps;
    for (std::size_t t = 0; t < steps; ++t) {
      StudyRow row{N, static_cast<int>(t), 0.0, 0.0};
      for (const auto& s : stats) {
        row.mean_l2 += s.l2[t] * inv;
        row.mean_tv += s.tv[t] * inv;
      }
      sum.mean_l2 += row.mean_l2 / static_cast<double>(steps);
      sum.mean_tv += row.mean_tv / static_cast<double>(steps);
      if (t == 0) sum.t0_tv = row.mean_tv;
      study.rows.push_back(row);
    }
    for (const auto& s : stats) sum.mean_cost_gap += s.gap * inv;
    study.summary.push_back(sum);
  }
  if (study.summary.size() >= 2) {
    std::vector<double> lx, ly, lt;
    for (const auto& s : study.summary) {
      lx.push_back(std::log(static_cast<double>(s.N)));
      ly.push_back(std::log(s.mean_l2));
      lt.push_back(std::log(s.mean_tv));
    }
    study.slope_l2 = fit_slope(lx, ly);
    study.slope_tv = fit_slope(lx, lt);
  }
  return study;
}

void write_study_csv(std::ostream& out, const StudyResult& study) {
  out << "# mfos-convergence v1\n";
  out << "N,time,mean_l2,mean_tv,mean_cost_gap\n";
  out.precision(17);
  for (const auto& r : study.rows) out << r.N << ',' << r.time << ',' << r.mean_l2 << ',' << r.mean_tv << ",\n";
  for (const auto& s : study.summary)
    out << s.N << ",all," << s.mean_l2 << ',' << s.mean_tv << ',' << s.mean_cost_gap << '\n';
  out << "slope,all," << study.slope_l2 << ',' << study.slope_tv << ",\n";
}

}  // namespace mfos
