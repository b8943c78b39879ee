#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mfos/environments.hpp"
#include "mfos/rng.hpp"

using namespace mfos;
using testing::row;

namespace {

NoiseValue random_noise(const Environment& env, Rng& rng) {
  if (!env.common_noise) return std::nullopt;
  return env.common_noise->sample(rng, 0);
}

}  // namespace

TEST_SUITE("environments") {
  TEST_CASE("ex1 shift kernel and density cost") {
    const auto env = make_environment("ex1");
    CHECK(env.horizon == 4);
    const std::vector<double> uni(5, 0.2);
    const Matrix q = env.kernel(0, uni, std::nullopt);
    CHECK(row(q, 2) == std::vector<double>{0, 0, 0, 1, 0});
    CHECK(row(q, 4) == std::vector<double>{0, 0, 0, 0, 1});
    CHECK(env.running_cost(uni)[1] == 0.2);
  }

  TEST_CASE("ex2 die") {
    const auto env = make_environment("ex2");
    const Matrix q = env.kernel(0, env.default_initial, std::nullopt);
    for (std::size_t x = 0; x < 6; ++x)
      for (double v : row(q, x)) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    Rng rng(1);
    CHECK(env.running_cost(sample_simplex(rng, 6))[4] == 5.0);
    CHECK(env.default_initial == std::vector<double>{0.25, 0.25, 0, 0, 0.5, 0});
    CHECK(env.mean_field_free());
  }

  TEST_CASE("ex3 congestion kernel") {
    const auto env = make_environment("ex3");
    const auto die = make_environment("ex2");
    const std::vector<double> zero(6, 0.0);
    CHECK((env.kernel(0, zero, std::nullopt) - die.kernel(0, zero, std::nullopt)).cwiseAbs().maxCoeff() < 1e-15);
    std::vector<double> mu = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
    const Matrix q = env.kernel(0, mu, std::nullopt);
    CHECK(q(0, 0) == doctest::Approx(1.4 / 6.0).epsilon(1e-14));
    CHECK(q(0, 3) == doctest::Approx(0.92 / 6.0).epsilon(1e-14));
    CHECK(std::abs(q.row(0).sum() - 1.0) < 1e-14);
    Rng rng(2);
    for (double c : {0.0, 0.3, 1.0}) {
      const auto e = env_congestion(c);
      for (int i = 0; i < 50; ++i) {
        const Matrix k = e.kernel(0, sample_simplex(rng, 6), std::nullopt);
        CHECK(k.minCoeff() >= 0.0);
        CHECK(k.maxCoeff() <= 1.0);
      }
    }
    CHECK_THROWS(env_congestion(1.5));
  }

  TEST_CASE("ex4 lazy walk and distance cost") {
    const auto env = make_environment("ex4");
    const Matrix q = env.kernel(0, env.default_initial, std::nullopt);
    CHECK(row(q, 3) == std::vector<double>{0, 0, 0.25, 0.5, 0.25, 0, 0});
    CHECK(row(q, 0) == std::vector<double>{0.75, 0.25, 0, 0, 0, 0, 0});
    const std::vector<double> rho = {0, 0, 0.25, 0.5, 0.25, 0, 0};
    for (double v : env.running_cost(rho)) CHECK(v == 0.0);
  }

  TEST_CASE("ex5 grid shift") {
    const auto env = make_environment("ex5");
    const auto& sp = env.space;
    const Matrix q = env.kernel(0, env.default_initial, std::nullopt);
    CHECK(q(static_cast<Eigen::Index>(sp.grid_index(2, 3)), static_cast<Eigen::Index>(sp.grid_index(3, 3))) == 1.0);
    CHECK(q(static_cast<Eigen::Index>(sp.grid_index(4, 1)), static_cast<Eigen::Index>(sp.grid_index(4, 1))) == 1.0);
    std::vector<double> delta(25, 0.0);
    delta[sp.grid_index(0, 0)] = 1.0;
    CHECK(env.running_cost(delta)[sp.grid_index(0, 0)] == 1.0);
  }

  TEST_CASE("ex6 diffusion with an obstacle") {
    const auto env = make_environment("ex6-M");
    const auto& sp = env.space;
    CHECK(env.horizon == 50);
    CHECK(env.has_common_noise());
    const std::vector<double> mu(100, 0.01);
    const auto interior = sp.grid_index(4, 4);
    // obstacle far away
    Matrix q = env.kernel(0, mu, sp.grid_index(9, 9));
    for (auto nb : {sp.grid_index(5, 4), sp.grid_index(3, 4), sp.grid_index(4, 5), sp.grid_index(4, 3)})
      CHECK(q(static_cast<Eigen::Index>(interior), static_cast<Eigen::Index>(nb)) == 0.25);
    const auto corner = sp.grid_index(0, 0);
    CHECK(q(static_cast<Eigen::Index>(corner), static_cast<Eigen::Index>(sp.grid_index(0, 1))) == 0.5);
    CHECK(q(static_cast<Eigen::Index>(corner), static_cast<Eigen::Index>(sp.grid_index(1, 0))) == 0.5);
    // obstacle on the east neighbour: that share stays put
    q = env.kernel(0, mu, sp.grid_index(5, 4));
    CHECK(q(static_cast<Eigen::Index>(interior), static_cast<Eigen::Index>(sp.grid_index(5, 4))) == 0.0);
    CHECK(q(static_cast<Eigen::Index>(interior), static_cast<Eigen::Index>(interior)) == 0.25);
    for (auto nb : {sp.grid_index(3, 4), sp.grid_index(4, 5), sp.grid_index(4, 3)})
      CHECK(q(static_cast<Eigen::Index>(interior), static_cast<Eigen::Index>(nb)) == 0.25);
  }

  TEST_CASE("randomized-better") {
    const auto env = make_environment("randomized-better");
    const Matrix q = env.kernel(0, env.default_initial, std::nullopt);
    CHECK(row(q, 0) == std::vector<double>{0, 1});
    CHECK(row(q, 1) == std::vector<double>{1, 0});
    const auto phi = env.running_cost(std::vector<double>{0.75, 0.25});
    CHECK(phi[0] == 5.0);
    CHECK(phi[1] == 1.0);
    CHECK(env.running_cost(std::vector<double>{0.5, 0.5})[0] == 1.0);
  }

  TEST_CASE("letter targets") {
    for (char c : std::string("MFOS")) {
      const auto t = letter_target(c);
      REQUIRE(t.rho.size() == 100);
      CHECK(std::abs(testing::sum(t.rho) - 1.0) < 1e-12);
      int k = 0;
      double m = 0.0;
      for (double v : t.rho)
        if (v > 0) {
          ++k;
          m = v;
        }
      CHECK(m == doctest::Approx(1.0 / k));
      for (double v : t.rho) CHECK((v == 0.0 || v == m));
    }
    const auto o = letter_target('O');
    for (std::size_t r = 0; r < 10; ++r)
      for (std::size_t c = 0; c < 10; ++c) CHECK(o.rho[r * 10 + c] == o.rho[r * 10 + 9 - c]);
    CHECK_THROWS(letter_target('Q'));
    CHECK_THROWS(parse_letter_bitmap("0101"));
  }

  TEST_CASE("unknown names list the valid ones") {
    try {
      make_environment("ex9");
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("randomized-better") != std::string::npos);
    }
  }

  TEST_CASE("kernels are row-stochastic on random populations") {
    Rng rng(123);
    for (const auto& name : environment_names()) {
      CAPTURE(name);
      const auto env = make_environment(name);
      const std::size_t ns = env.num_states();
      bool ok = true;
      for (int i = 0; i < 1000; ++i) {
        const auto mu = sample_simplex(rng, ns);
        const Matrix q = env.kernel(i % std::max(env.horizon, 1), mu, random_noise(env, rng));
        for (Eigen::Index r = 0; r < q.rows(); ++r) ok = ok && std::abs(q.row(r).sum() - 1.0) <= 1e-12;
        ok = ok && q.minCoeff() >= 0.0;
      }
      CHECK(ok);
    }
  }

  TEST_CASE("vector-Jacobian products match finite differences") {
    Rng rng(7);
    const double h = 1e-6;
    for (const auto& name : environment_names()) {
      CAPTURE(name);
      const auto env = make_environment(name);
      const std::size_t ns = env.num_states();
      const auto mu = sample_simplex(rng, ns);
      const NoiseValue noise = random_noise(env, rng);
      auto perturbed = [&](std::size_t i, double d) {
        auto m = mu;
        m[i] += d;
        return m;
      };
      if (env.kernel_vjp) {
        Matrix w = Matrix::Random(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns));
        std::vector<double> g(ns, 0.0);
        env.kernel_vjp(0, mu, noise, w, g);
        for (std::size_t i = 0; i < ns; ++i) {
          const double fd = ((env.kernel(0, perturbed(i, h), noise).cwiseProduct(w)).sum() -
                             (env.kernel(0, perturbed(i, -h), noise).cwiseProduct(w)).sum()) / (2 * h);
          CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
        }
      }
      if (env.running_cost_vjp && env.cost_uses_mu && name != "randomized-better") {
        std::vector<double> w(ns), g(ns, 0.0);
        for (auto& v : w) v = rng.uniform() - 0.5;
        env.running_cost_vjp(mu, w, g);
        auto dot = [&](const std::vector<double>& m) {
          const auto phi = env.running_cost(m);
          double s = 0.0;
          for (std::size_t x = 0; x < ns; ++x) s += phi[x] * w[x];
          return s;
        };
        for (std::size_t i = 0; i < ns; ++i)
          CHECK(g[i] == doctest::Approx((dot(perturbed(i, h)) - dot(perturbed(i, -h))) / (2 * h)).epsilon(1e-6));
      }
      if (env.has_terminal_cost()) {
        std::vector<double> g(ns, 0.0);
        env.terminal_cost_vjp(mu, 1.0, g);
        for (std::size_t i = 0; i < ns; ++i)
          CHECK(g[i] == doctest::Approx((env.terminal_cost(perturbed(i, h)) - env.terminal_cost(perturbed(i, -h))) / (2 * h))
                            .epsilon(1e-6));
      }
    }
  }

  TEST_CASE("builder rejects broken environments") {
    auto bad_kernel = [](int, std::span<const double>, NoiseValue) { return Matrix::Constant(2, 2, 0.4); };
    CHECK_THROWS(EnvironmentBuilder("bad", StateSpace::line(2), 1)
                     .kernel(bad_kernel)
                     .running_cost([](std::span<const double> mu) { return std::vector<double>(mu.size(), 0.0); })
                     .default_initial({0.5, 0.5})
                     .build());
    CHECK_THROWS(EnvironmentBuilder("neg", StateSpace::line(2), -1).build());
    CHECK(with_horizon(make_environment("ex1"), 0).horizon == 0);
  }
}
