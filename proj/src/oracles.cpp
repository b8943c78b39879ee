#include "mfos/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mfos {

double closed_form_ex1(int horizon) {
  if (horizon < 1) throw std::invalid_argument("closed_form_ex1: horizon must be at least 1");
  const double t = horizon;
  return (t + 2.0) / (2.0 * (t + 1.0));
}

DppSolution single_agent_dpp(const Environment& env) { return single_agent_dpp(env, env.default_initial); }

DppSolution single_agent_dpp(const Environment& env, std::span<const double> mu0) {
  if (!env.mean_field_free())
    throw std::invalid_argument("single_agent_dpp: " + env.name + " couples agents through the mean field");
  const std::size_t ns = env.num_states();
  const auto horizon = static_cast<std::size_t>(env.horizon);
  validate_probability_vector(mu0, 1e-9, "mu0");
  if (mu0.size() != ns) throw std::invalid_argument("single_agent_dpp: mu0 has the wrong size");
  // Phi and Q ignore mu, so any distribution serves as the argument.
  const std::vector<double> phi = env.running_cost(mu0);

  DppSolution sol;
  sol.value.assign(horizon + 1, std::vector<double>(ns));
  sol.rules.assign(horizon + 1, std::vector<double>(ns, 1.0));
  sol.value[horizon] = phi;
  for (std::size_t step = horizon; step-- > 0;) {
    const Matrix q = env.kernel(static_cast<int>(step), mu0, std::nullopt);
    for (std::size_t x = 0; x < ns; ++x) {
      double cont = 0.0;
      for (std::size_t z = 0; z < ns; ++z) cont += q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z)) * sol.value[step + 1][z];
      const bool stop = phi[x] <= cont;
      sol.rules[step][x] = stop ? 1.0 : 0.0;
      sol.value[step][x] = stop ? phi[x] : cont;
    }
  }
  for (std::size_t x = 0; x < ns; ++x) sol.value_at_mu0 += mu0[x] * sol.value[0][x];
  return sol;
}

Policy grid_point_policy(const Environment& env, std::span<const double> point, StoppingClass cls) {
  const std::size_t per_time = cls == StoppingClass::synchronous ? 1 : env.num_states();
  if (point.size() != per_time * static_cast<std::size_t>(env.horizon))
    throw std::invalid_argument("grid_point_policy: point has the wrong dimension");
  std::vector<std::vector<double>> schedule;
  for (int n = 0; n < env.horizon; ++n) {
    const auto first = point.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(n) * per_time);
    schedule.emplace_back(first, first + static_cast<std::ptrdiff_t>(per_time));
  }
  return schedule_policy(std::move(schedule));
}

namespace {

std::size_t grid_size(int levels, std::size_t dims) {
  std::size_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) {
    if (total > kMaxGridPoints / static_cast<std::size_t>(levels))
      throw std::invalid_argument("grid_search_policy: search space exceeds " + std::to_string(kMaxGridPoints) + " points");
    total *= static_cast<std::size_t>(levels);
  }
  return total;
}

struct Best {
  double value = std::numeric_limits<double>::infinity();
  std::size_t index = std::numeric_limits<std::size_t>::max();

  void offer(double v, std::size_t i) {
    if (v < value || (v == value && i < index)) {
      value = v;
      index = i;
    }
  }
};

// Each coordinate d takes the values lo[d] + j (hi[d] - lo[d]) / M, j = 0..M.
struct Grid {
  std::vector<double> lo, hi;
  int m = 1;

  std::vector<double> point(std::size_t index) const {
    std::vector<double> p(lo.size());
    for (std::size_t d = lo.size(); d-- > 0;) {
      const auto j = static_cast<int>(index % static_cast<std::size_t>(m + 1));
      index /= static_cast<std::size_t>(m + 1);
      // Exact endpoints keep 0/1 levels exact.
      p[d] = j == m ? hi[d] : lo[d] + (hi[d] - lo[d]) * j / m;
    }
    return p;
  }
};

Best search(const Environment& env, const ExtendedDistribution& nu0, const Grid& grid, StoppingClass cls,
            std::span<const std::size_t> noise_path, Exec exec) {
  const std::size_t total = grid_size(grid.m + 1, grid.lo.size());
  const auto evaluate = [&](std::size_t i) {
    const auto p = grid.point(i);
    return rollout(env, grid_point_policy(env, p, cls), nu0, noise_path).total_cost();
  };
  Best best;
  const auto count = static_cast<std::int64_t>(total);
  if (exec == Exec::parallel) {
#pragma omp parallel
    {
      Best local;
#pragma omp for schedule(static)
      for (std::int64_t i = 0; i < count; ++i) local.offer(evaluate(static_cast<std::size_t>(i)), static_cast<std::size_t>(i));
#pragma omp critical
      best.offer(local.value, local.index);
    }
  } else {
    for (std::int64_t i = 0; i < count; ++i) best.offer(evaluate(static_cast<std::size_t>(i)), static_cast<std::size_t>(i));
  }
  return best;
}

}  // namespace

GridSearchResult grid_search_policy(const Environment& env, const ExtendedDistribution& nu0, int resolution,
                                    StoppingClass cls, std::span<const std::size_t> noise_path, Exec exec, bool refine) {
  if (resolution < 1) throw std::invalid_argument("grid_search_policy: resolution must be at least 1");
  if (env.has_common_noise() && noise_path.empty())
    throw std::invalid_argument("grid_search_policy: common-noise environments need a fixed noise path");
  const std::size_t per_time = cls == StoppingClass::synchronous ? 1 : env.num_states();
  const std::size_t dims = per_time * static_cast<std::size_t>(env.horizon);
  GridSearchResult r;
  if (dims == 0) {
    r.value = r.coarse_value = rollout(env, constant_policy({1.0}), nu0, noise_path).total_cost();
    r.evaluations = 1;
    return r;
  }
  const std::size_t total = grid_size(resolution + 1, dims);

  Grid coarse{std::vector<double>(dims, 0.0), std::vector<double>(dims, 1.0), resolution};
  const Best b0 = search(env, nu0, coarse, cls, noise_path, exec);
  r.coarse_value = r.value = b0.value;
  r.coarse_point = r.point = coarse.point(b0.index);
  r.evaluations = total;
  if (!refine || resolution == 1) return r;

  Grid fine{std::vector<double>(dims), std::vector<double>(dims), resolution};
  const double half = 1.0 / resolution;
  for (std::size_t d = 0; d < dims; ++d) {
    fine.lo[d] = std::max(0.0, r.point[d] - half);
    fine.hi[d] = std::min(1.0, r.point[d] + half);
  }
  const Best b1 = search(env, nu0, fine, cls, noise_path, exec);
  r.evaluations += total;
  if (b1.value < r.value) {
    r.value = b1.value;
    r.point = fine.point(b1.index);
  }
  return r;
}

double theorem1_bound(const BoundParams& p) {
  if (p.L_psi < 0 || p.L_p < 0 || p.L_fbar < 0) throw std::invalid_argument("theorem1_bound: negative constant");
  if (p.N < 1) throw std::invalid_argument("theorem1_bound: N must be at least 1");
  if (p.S_card < 1) throw std::invalid_argument("theorem1_bound: |S| must be at least 1");
  if (p.T <= 0) return 0.0;
  const double k = p.K();
  const double t = p.T;
  const double kt = std::pow(k, t);
  const double geometric = k == 1.0 ? t : (1.0 - kt) / (1.0 - k);
  const double root_n = std::sqrt(static_cast<double>(p.N));
  const double s = static_cast<double>(p.S_card);
  return 2.0 * t * p.L_psi * (1.0 + p.L_p) *
         (s / (4.0 * root_n) * geometric + kt * std::sqrt(s - 1.0) / (2.0 * root_n));
}

double lemma1_t0_bound(std::size_t S_card, std::size_t N) {
  if (S_card < 1 || N < 1) throw std::invalid_argument("lemma1_t0_bound: |S| and N must be at least 1");
  return std::sqrt(static_cast<double>(S_card) - 1.0) / (2.0 * std::sqrt(static_cast<double>(N)));
}

LipschitzEstimate estimate_lipschitz(const Environment& env, const Policy& policy, std::size_t probes, Rng& rng) {
  const std::size_t ns = env.num_states();
  LipschitzEstimate est;
  if (env.horizon < 1) return est;
  const double scales[] = {1.0, 1e-1, 1e-2, 1e-3};
  for (std::size_t k = 0; k < probes; ++k) {
    const int n = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(env.horizon)));
    const auto a = sample_simplex(rng, 2 * ns);
    const auto b = sample_simplex(rng, 2 * ns);
    const double eps = scales[k % 4];
    std::vector<double> c(2 * ns);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = (1.0 - eps) * a[i] + eps * b[i];
    const ExtendedDistribution nu(a);
    const ExtendedDistribution nu2(c);
    const double d_nu = tv_distance(nu.mass(), nu2.mass());
    if (d_nu <= 0.0) continue;

    NoiseValue noise;
    if (env.has_common_noise()) noise = env.common_noise->sample(rng, n);

    // Policy sensitivity.
    const auto h1 = make_rule(policy(n, nu), ns).expand(ns);
    const auto h2 = make_rule(policy(n, nu2), ns).expand(ns);
    double d_p = 0.0;
    for (std::size_t x = 0; x < ns; ++x) d_p = std::max(d_p, std::abs(h1[x] - h2[x]));
    est.L_p = std::max(est.L_p, d_p / d_nu);

    // Dynamics and cost sensitivity on independent rules.
    std::vector<double> g1(ns), g2(ns);
    for (std::size_t x = 0; x < ns; ++x) {
      g1[x] = rng.uniform();
      g2[x] = std::clamp(g1[x] + eps * (rng.uniform() - 0.5), 0.0, 1.0);
    }
    double d_h = 0.0;
    for (std::size_t x = 0; x < ns; ++x) d_h = std::max(d_h, std::abs(g1[x] - g2[x]));
    const auto r1 = StoppingRule::per_state(g1);
    const auto r2 = StoppingRule::per_state(g2);
    const auto mu1 = marginal(nu);
    const auto mu2 = marginal(nu2);
    const auto f1 = mf_step(nu, r1, env.kernel(n, mu1, noise));
    const auto f2 = mf_step(nu2, r2, env.kernel(n, mu2, noise));
    const double denom = d_nu + d_h;
    est.L_fbar = std::max(est.L_fbar, tv_distance(f1.mass(), f2.mass()) / denom);
    const double c1 = one_step_cost(nu, r1, env.running_cost(mu1));
    const double c2 = one_step_cost(nu2, r2, env.running_cost(mu2));
    est.L_psi = std::max(est.L_psi, std::abs(c1 - c2) / denom);
  }
  return est;
}

void write_grid_search_csv(std::ostream& out, const GridSearchResult& r, StoppingClass cls, const Environment& env) {
  out << "# mfos-grid-search v1\n";
  out << "time,state,probability\n";
  out.precision(17);
  const std::size_t per_time = cls == StoppingClass::synchronous ? 1 : env.num_states();
  for (std::size_t i = 0; i < r.point.size(); ++i) {
    out << i / per_time << ',';
    out << (cls == StoppingClass::synchronous ? std::string("all") : env.space.label(i % per_time));
    out << ',' << r.point[i] << '\n';
  }
  out << "value,," << r.value << '\n';
}

}  // namespace mfos
