#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "mfos/n_agent.hpp"
#include "mfos/oracles.hpp"

using namespace mfos;

namespace {

// Exact fractions for an independent single-agent backward induction.
struct Frac {
  long long p = 0, q = 1;
  Frac(long long a = 0, long long b = 1) : p(a), q(b) {
    const long long g = std::gcd(p < 0 ? -p : p, q);
    if (g > 1) {
      p /= g;
      q /= g;
    }
  }
  Frac operator+(Frac o) const { return {p * o.q + o.p * q, q * o.q}; }
  Frac operator*(Frac o) const { return {p * o.p, q * o.q}; }
  bool operator<(Frac o) const { return p * o.q < o.p * q; }
  double value() const { return static_cast<double>(p) / static_cast<double>(q); }
};

// Die of `faces`, cost = face value, T rolls left; V at eta.
Frac die_value(int T, const std::vector<Frac>& eta, std::vector<std::vector<int>>* rules) {
  const int faces = static_cast<int>(eta.size());
  std::vector<Frac> v(static_cast<std::size_t>(faces));
  for (int x = 0; x < faces; ++x) v[static_cast<std::size_t>(x)] = Frac(x + 1);
  std::vector<std::vector<int>> r(static_cast<std::size_t>(T + 1), std::vector<int>(static_cast<std::size_t>(faces), 1));
  for (int n = T - 1; n >= 0; --n) {
    Frac cont;
    for (const auto& f : v) cont = cont + f * Frac(1, faces);
    for (int x = 0; x < faces; ++x) {
      const Frac stop(x + 1);
      const bool go = cont < stop;
      r[static_cast<std::size_t>(n)][static_cast<std::size_t>(x)] = go ? 0 : 1;
      v[static_cast<std::size_t>(x)] = go ? cont : stop;
    }
  }
  if (rules) *rules = r;
  Frac total;
  for (int x = 0; x < faces; ++x) total = total + eta[static_cast<std::size_t>(x)] * v[static_cast<std::size_t>(x)];
  return total;
}

}  // namespace

TEST_SUITE("oracles") {
  TEST_CASE("closed form of the 1D towards-uniform problem") {
    CHECK(closed_form_ex1(4) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(closed_form_ex1(1) == 0.75);
    CHECK(closed_form_ex1(1000) == doctest::Approx(0.5005).epsilon(1e-6));
    for (int t = 1; t < 50; ++t) CHECK(closed_form_ex1(t + 1) < closed_form_ex1(t));
    CHECK_THROWS(closed_form_ex1(0));
  }

  TEST_CASE("independent rational oracle for the die") {
    std::vector<std::vector<int>> rules;
    const Frac v = die_value(5, {Frac(1, 4), Frac(1, 4), Frac(0), Frac(0), Frac(1, 2), Frac(0)}, &rules);
    CHECK(v.p == 119);
    CHECK(v.q == 72);
    CHECK(rules[0] == std::vector<int>{1, 0, 0, 0, 0, 0});
    CHECK(rules[4] == std::vector<int>{1, 1, 1, 0, 0, 0});
  }

  TEST_CASE("single-agent DPP on the die") {
    const auto env = make_environment("ex2");
    const auto d = single_agent_dpp(env);
    CHECK(std::abs(d.value_at_mu0 - 119.0 / 72.0) < 1e-12);
    const std::vector<std::vector<double>> expected = {{1, 0, 0, 0, 0, 0}, {1, 1, 0, 0, 0, 0}, {1, 1, 0, 0, 0, 0},
                                                       {1, 1, 0, 0, 0, 0}, {1, 1, 1, 0, 0, 0}, {1, 1, 1, 1, 1, 1}};
    CHECK(d.rules == expected);
    // the rules reproduce the value through the mean-field flow
    CHECK(std::abs(social_cost(env, schedule_policy(d.rules), initial_extend(env.default_initial), Rng(0)) -
                   d.value_at_mu0) < 1e-12);
  }

  TEST_CASE("DPP edge cases") {
    const auto env0 = with_horizon(make_environment("ex2"), 0);
    const auto d0 = single_agent_dpp(env0);
    CHECK(d0.value[0] == std::vector<double>{1, 2, 3, 4, 5, 6});
    const auto base = make_environment("ex2");
    const auto flat = EnvironmentBuilder("flat", base.space, 3)
                          .kernel(base.kernel)
                          .running_cost([](std::span<const double> mu) { return std::vector<double>(mu.size(), 2.5); }, {}, false)
                          .default_initial(base.default_initial)
                          .build();
    CHECK(single_agent_dpp(flat).value_at_mu0 == doctest::Approx(2.5).epsilon(1e-15));
    CHECK_THROWS(single_agent_dpp(make_environment("ex1")));
  }

  TEST_CASE("randomized rules beat 0/1 rules") {
    const auto env = make_environment("randomized-better");
    const auto nu0 = initial_extend(env.default_initial);
    const auto g = grid_search_policy(env, nu0, 12, StoppingClass::asynchronous);
    CHECK(std::abs(g.value - 2.0) < 1e-6);
    CHECK(g.point[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(g.point[1] == 0.0);
    const auto binary = grid_search_policy(env, nu0, 1, StoppingClass::asynchronous, {}, Exec::parallel, false);
    CHECK(binary.value == doctest::Approx(4.0).epsilon(1e-15));
    // 1/3 is not on the M = 10 grid nor on its refinement, so 2 is not reached
    const auto ten = grid_search_policy(env, nu0, 10, StoppingClass::asynchronous);
    CHECK(ten.value > 2.0 + 1e-3);
  }

  TEST_CASE("synchronous grid search on ex1") {
    const auto env = make_environment("ex1");
    const auto g = grid_search_policy(env, initial_extend(env.default_initial), 20, StoppingClass::synchronous);
    CHECK(std::abs(g.value - 0.6) < 1e-3);
    CHECK(g.value <= g.coarse_value);
    const auto s = grid_search_policy(env, initial_extend(env.default_initial), 6, StoppingClass::synchronous, {},
                                      Exec::serial);
    const auto p = grid_search_policy(env, initial_extend(env.default_initial), 6, StoppingClass::synchronous, {},
                                      Exec::parallel);
    CHECK(s.value == p.value);
    CHECK(s.point == p.point);
    CHECK_THROWS(grid_search_policy(env, initial_extend(env.default_initial), 20, StoppingClass::asynchronous));
  }

  TEST_CASE("propagation-of-chaos bound") {
    BoundParams b{1.5, 0.7, 0.0, 4, 10, 100};
    CHECK(theorem1_bound(b) == doctest::Approx(2 * 4 * 1.5 * 1.7 * 10 / (4 * 10.0)).epsilon(1e-14));
    b.L_fbar = 0.3;
    const double base = theorem1_bound(b);
    b.N = 400;
    CHECK(theorem1_bound(b) / base == doctest::Approx(0.5).epsilon(1e-14));
    b.T = 0;
    CHECK(theorem1_bound(b) == 0.0);
    // K = 1 replaces the geometric sum by T
    BoundParams k1{1.0, 1.0, 0.5, 3, 4, 16};
    CHECK(theorem1_bound(k1) == doctest::Approx(2 * 3 * 1.0 * 2.0 * (4 / 16.0 * 3 + std::sqrt(3.0) / 8.0)).epsilon(1e-14));

    CHECK(lemma1_t0_bound(1, 50) == 0.0);
    CHECK(lemma1_t0_bound(10, 100) == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(lemma1_t0_bound(10, 100) / lemma1_t0_bound(10, 200) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  }

  TEST_CASE("Lipschitz estimates are finite") {
    Rng rng(5);
    const auto env = make_environment("ex3");
    const auto est = estimate_lipschitz(env, constant_policy({0.3}), 50, rng);
    CHECK(std::isfinite(est.L_psi));
    CHECK(std::isfinite(est.L_fbar));
    CHECK(est.L_fbar > 0.0);
    CHECK(est.L_p == 0.0);  // a constant policy does not react to nu
  }

  TEST_CASE("exhaustive 0/1 search agrees with backward induction") {
    const auto env = with_horizon(make_environment("ex2"), 2);
    const auto nu0 = initial_extend(env.default_initial);
    const auto d = single_agent_dpp(env);
    const auto g = grid_search_policy(env, nu0, 1, StoppingClass::asynchronous, {}, Exec::parallel, false);
    CHECK(std::abs(g.value - d.value_at_mu0) < 1e-9);
  }

  TEST_CASE("finer nested grids never do worse") {
    for (const char* name : {"randomized-better", "ex1"}) {
      CAPTURE(name);
      const auto env = make_environment(name);
      const auto nu0 = initial_extend(env.default_initial);
      const auto cls = env.num_states() > 2 ? StoppingClass::synchronous : StoppingClass::asynchronous;
      double prev = INFINITY;
      for (int m : {1, 2, 4, 8}) {
        const double v = grid_search_policy(env, nu0, m, cls, {}, Exec::parallel, false).value;
        CHECK(v <= prev + 1e-15);
        prev = v;
      }
    }
  }

  TEST_CASE("the finite-population bound covers the measured cost gap") {
    const auto env = make_environment("ex1");
    const auto policy = testing::ex1_optimal_policy(env.horizon);
    Rng rng(23);
    const auto lip = estimate_lipschitz(env, policy, 10000, rng);
    const std::vector<std::size_t> Ns{10, 100, 1000};
    const auto s = convergence_study(env, policy, Ns, 10, Rng(8));
    for (const auto& row : s.summary) {
      const double bound = theorem1_bound({lip.L_psi, lip.L_p, lip.L_fbar, env.horizon, 2 * env.num_states(), row.N});
      CAPTURE(row.N);
      CHECK(row.mean_cost_gap <= bound);
    }
  }
}
