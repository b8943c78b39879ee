#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "mfos/mean_field.hpp"
#include "mfos/oracles.hpp"
#include "mfos/rng.hpp"

using namespace mfos;

namespace {

// Random per-state rule list, fresh at every call (policy ignores nu).
Policy random_schedule(const Environment& env, Rng& rng) {
  std::vector<std::vector<double>> per_time;
  for (int n = 0; n <= env.horizon; ++n) {
    std::vector<double> h(env.num_states());
    for (auto& v : h) v = rng.uniform();
    per_time.push_back(h);
  }
  return schedule_policy(per_time);
}

}  // namespace

TEST_SUITE("mean_field") {
  TEST_CASE("mf_step hand examples") {
    Rng rng(1);
    const auto nu = testing::random_extended(rng, 4);
    const Matrix id = Matrix::Identity(4, 4);
    CHECK(mf_step(nu, StoppingRule::per_state({0, 0, 0, 0}), id) == nu);

    const auto full = mf_step(nu, StoppingRule::stop_all(4), Matrix::Constant(4, 4, 0.25));
    for (std::size_t x = 0; x < 4; ++x) {
      CHECK(full.stopped(x) == doctest::Approx(nu.stopped(x) + nu.alive(x)).epsilon(1e-15));
      CHECK(full.alive(x) == 0.0);
    }

    const auto env = make_environment("ex1");
    const auto nu0 = initial_extend(env.default_initial);
    const auto next = mf_step(nu0, StoppingRule::per_state({0.2, 0, 0, 0, 0}), env.kernel(0, env.default_initial, {}));
    CHECK(next.stopped(0) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(next.alive(1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(next.total_alive() + next.total_stopped() == doctest::Approx(1.0));
    CHECK(next.alive(0) == 0.0);
  }

  TEST_CASE("one_step_cost") {
    const auto ex2 = make_environment("ex2");
    const auto eta = initial_extend(ex2.default_initial);
    CHECK(one_step_cost(ex2, eta, StoppingRule::per_state(std::vector<double>(6, 0.0))) == 0.0);
    CHECK(one_step_cost(ex2, eta, StoppingRule::stop_all(6)) == doctest::Approx(3.25).epsilon(1e-15));
    const std::vector<double> c(6, 2.5);
    Rng rng(4);
    const auto nu = testing::random_extended(rng, 6);
    CHECK(one_step_cost(nu, StoppingRule::stop_all(6), c) == doctest::Approx(2.5 * nu.total_alive()));
  }

  TEST_CASE("rollout of fixed policies on ex1") {
    const auto env = make_environment("ex1");
    const auto nu0 = initial_extend(env.default_initial);
    const auto never = rollout(env, constant_policy({0.0}), nu0);
    CHECK(never.distributions.back().alive(4) == 1.0);
    CHECK(never.total_cost() == doctest::Approx(1.0).epsilon(1e-15));

    const auto best = rollout(env, testing::ex1_optimal_policy(env.horizon), nu0);
    const auto mu_final = marginal(*best.final_distribution);
    for (double m : mu_final) CHECK(m == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(std::abs(best.total_cost() - 0.6) < 1e-12);
    CHECK(std::abs(social_cost(env, testing::ex1_optimal_policy(env.horizon), nu0, Rng(0)) - 0.6) < 1e-12);
  }

  TEST_CASE("ex2 values of listed policies") {
    const auto env = make_environment("ex2");
    const auto eta = initial_extend(env.default_initial);
    CHECK(social_cost(env, constant_policy({1.0}), eta, Rng(0)) == doctest::Approx(3.25).epsilon(1e-15));
    const Policy listed = schedule_policy({{1, 0, 0, 0, 0, 0},
                                           {1, 1, 0, 0, 0, 0},
                                           {1, 1, 0, 0, 0, 0},
                                           {1, 1, 0, 0, 0, 0},
                                           {1, 1, 1, 0, 0, 0},
                                           {1, 1, 1, 1, 1, 1}});
    // exact rational value of the listed rules, see the oracle suite
    CHECK(std::abs(social_cost(env, listed, eta, Rng(0)) - 119.0 / 72.0) < 1e-12);
  }

  TEST_CASE("zero costs give zero value") {
    const auto base = make_environment("ex1");
    const auto zero = EnvironmentBuilder("zero", base.space, base.horizon)
                          .kernel(base.kernel)
                          .running_cost([](std::span<const double> mu) { return std::vector<double>(mu.size(), 0.0); },
                                        {}, false)
                          .default_initial(base.default_initial)
                          .build();
    Rng rng(3);
    for (int i = 0; i < 5; ++i)
      CHECK(social_cost(zero, random_schedule(zero, rng), initial_extend(zero.default_initial), Rng(0)) == 0.0);
  }

  TEST_CASE("make_rule clamps roundoff and rejects real violations") {
    std::size_t clamped = 0;
    const auto r = make_rule(std::vector<double>{1.0 + 5e-7, -5e-7, 0.5}, 3, &clamped);
    CHECK(clamped == 2);
    CHECK(r.at(0) == 1.0);
    CHECK(r.at(1) == 0.0);
    CHECK_THROWS(make_rule(std::vector<double>{1.1, 0, 0}, 3));
    CHECK_THROWS(make_rule(std::vector<double>{0.5, 0.5}, 3));
    CHECK(make_rule(std::vector<double>{0.4}, 3).is_synchronous());
  }

  TEST_CASE("invariants over random policies in every environment") {
    Rng rng(2024);
    for (const auto& name : environment_names()) {
      CAPTURE(name);
      const auto env = make_environment(name);
      const std::size_t ns = env.num_states();
      for (int trial = 0; trial < 5; ++trial) {
        const Policy p = random_schedule(env, rng);
        const auto nu0 = initial_extend(sample_simplex(rng, ns));
        Rng noise_rng = rng.split(static_cast<std::uint64_t>(trial));
        const auto tr = rollout(env, p, nu0, noise_rng);
        const double tol = 1e-12 * std::max(env.horizon, 1);
        for (std::size_t n = 0; n < tr.distributions.size(); ++n) {
          const auto& nu = tr.distributions[n];
          CHECK(std::abs(testing::sum(nu.mass()) - 1.0) <= tol);
          if (n > 0) {
            const auto& prev = tr.distributions[n - 1];
            for (std::size_t x = 0; x < ns; ++x) CHECK(nu.stopped(x) >= prev.stopped(x));
          }
        }
        CHECK(tr.rules.back().expand(ns) == std::vector<double>(ns, 1.0));
        CHECK(tr.final_distribution->total_alive() == 0.0);
      }
    }
  }

  TEST_CASE("social cost is bitwise deterministic and thread independent") {
    const auto env = make_environment("ex6-O");
    Rng rng(9);
    const Policy p = random_schedule(env, rng);
    const auto nu0 = initial_extend(env.default_initial);
    const double a = social_cost(env, p, nu0, Rng(77), 8, 0, Exec::parallel);
    const double b = social_cost(env, p, nu0, Rng(77), 8, 0, Exec::parallel);
    const double c = social_cost(env, p, nu0, Rng(77), 8, 0, Exec::serial);
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a != social_cost(env, p, nu0, Rng(78), 8, 0, Exec::serial));
    const auto ex1 = make_environment("ex1");
    CHECK_THROWS(social_cost(ex1, constant_policy({0.5}), initial_extend(ex1.default_initial), Rng(0), 4));
  }

  TEST_CASE("trajectory csv carries a version header") {
    const auto env = make_environment("ex2");
    const auto tr = rollout(env, constant_policy({0.5}), initial_extend(env.default_initial));
    std::ostringstream out;
    write_trajectory_csv(out, tr, env.space);
    CHECK(out.str().rfind("# mfos-trajectory v1\n", 0) == 0);
  }

  TEST_CASE("zero horizon stops everyone at once") {
    const auto env = with_horizon(make_environment("ex2"), 0);
    CHECK(social_cost(env, constant_policy({0.0}), initial_extend(env.default_initial), Rng(0)) ==
          doctest::Approx(3.25).epsilon(1e-15));
  }
}
