#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mfos/n_agent.hpp"
#include "mfos/oracles.hpp"

using namespace mfos;

TEST_SUITE("n_agent") {
  TEST_CASE("empirical distributions are normalized") {
    const auto env = make_environment("ex3");
    Rng rng(11);
    const auto r = simulate(env, constant_policy({0.2}), 257, rng);
    REQUIRE(r.empirical_extended.size() == static_cast<std::size_t>(env.horizon + 1));
    for (const auto& e : r.empirical_extended) {
      CHECK(std::abs(testing::sum(e) - 1.0) < 1e-12);
      for (double v : e) CHECK(std::abs(v * 257 - std::round(v * 257)) < 1e-9);
    }
    CHECK(r.stopping_times.size() == 257);
    for (int t : r.stopping_times) CHECK((t >= 0 && t <= env.horizon));
  }

  TEST_CASE("same seed, same run") {
    const auto env = make_environment("ex4");
    Rng a(3), b(3);
    const auto ra = simulate(env, constant_policy({0.3}), 100, a);
    const auto rb = simulate(env, constant_policy({0.3}), 100, b);
    CHECK(ra.empirical_extended == rb.empirical_extended);
    CHECK(ra.realized_cost == rb.realized_cost);
    CHECK(ra.noise_path == rb.noise_path);
  }

  TEST_CASE("everyone stops at time zero") {
    const auto env = make_environment("ex2");
    Rng rng(21);
    double mean = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      Rng r = rng.split(static_cast<std::uint64_t>(rep));
      const auto res = simulate(env, constant_policy({1.0}), 10000, r);
      for (int t : res.stopping_times) CHECK_MESSAGE(t == 0, "stopped late");
      mean += res.realized_cost / 10.0;
    }
    CHECK(std::abs(mean - 3.25) < 0.05);
  }

  TEST_CASE("single agent on a deterministic path matches the mean-field cost") {
    const auto env = make_environment("ex1");
    Rng rng(1);
    const auto never = constant_policy({0.0});
    const auto r = simulate(env, never, 1, rng);
    const double j = social_cost(env, never, initial_extend(env.default_initial), Rng(0));
    CHECK(r.realized_cost == doctest::Approx(j).epsilon(1e-14));
    CHECK(r.stopping_times[0] == env.horizon);
  }

  TEST_CASE("deterministic flows have zero distance") {
    const auto env = make_environment("ex1");
    const std::vector<std::size_t> Ns{10, 100};
    const auto s = convergence_study(env, constant_policy({0.0}), Ns, 3, Rng(4));
    for (const auto& row : s.rows) {
      CHECK(row.mean_l2 < 1e-12);
      CHECK(row.mean_tv < 1e-12);
    }
  }

  TEST_CASE("serial and parallel studies agree") {
    const auto env = make_environment("ex3");
    const std::vector<std::size_t> Ns{10, 100, 1000};
    const auto a = convergence_study(env, constant_policy({0.25}), Ns, 4, Rng(9), Exec::serial);
    const auto b = convergence_study(env, constant_policy({0.25}), Ns, 4, Rng(9), Exec::parallel);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].mean_l2 == b.rows[i].mean_l2);
      CHECK(a.rows[i].mean_tv == b.rows[i].mean_tv);
    }
    CHECK(a.slope_l2 == b.slope_l2);
  }

  TEST_CASE("initial error stays under the sampling bound and shrinks") {
    const auto env = make_environment("ex2");
    const std::vector<std::size_t> Ns{10, 100, 1000, 10000};
    const auto s = convergence_study(env, constant_policy({0.0}), Ns, 10, Rng(17));
    for (const auto& row : s.summary)
      CHECK(row.t0_tv <= lemma1_t0_bound(2 * env.space.size(), row.N));
    CHECK(s.slope_l2 < -0.3);
    CHECK(s.slope_l2 > -0.7);
  }

  TEST_CASE("least-squares slope") {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{3, 1, -1, -3};
    CHECK(fit_slope(x, y) == doctest::Approx(-2.0).epsilon(1e-15));
    const std::vector<double> one{1};
    CHECK_THROWS(fit_slope(one, one));
  }
}
