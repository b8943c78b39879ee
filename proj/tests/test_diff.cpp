#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mfos/diff_rollout.hpp"
#include "mfos/grad_check.hpp"
#include "mfos/network.hpp"
#include "mfos/trainers.hpp"

using namespace mfos;

namespace {

PolicyNetwork tiny_net(const Environment& env, StoppingClass cls, std::uint64_t seed, bool timed = true) {
  NetworkConfig c = default_network_config(env, cls, timed);
  c.blocks = 1;
  c.width = 16;
  return PolicyNetwork(c, seed);
}

struct Batch {
  Matrix nu0;
  std::vector<std::vector<std::size_t>> noise;
};

Batch make_batch(const Environment& env, int b, std::uint64_t seed) {
  Rng rng(seed);
  return {sample_da_batch(rng, env.num_states(), b), sample_noise_paths(env, rng.split(1), b)};
}

}  // namespace

TEST_SUITE("diff_engine") {
  TEST_CASE("differentiable rollout reproduces the exact social cost") {
    for (const auto& name : environment_names()) {
      CAPTURE(name);
      const auto env = make_environment(name);
      const auto net = tiny_net(env, StoppingClass::asynchronous, 3);
      const Batch b = make_batch(env, 3, 11);
      const LossGrad lg = da_loss_gradient(env, net, b.nu0, b.noise);
      double expected = 0.0;
      for (int r = 0; r < 3; ++r) {
        std::vector<double> mu(env.num_states());
        for (std::size_t x = 0; x < mu.size(); ++x) mu[x] = b.nu0(r, static_cast<Eigen::Index>(env.num_states() + x));
        const auto tr = rollout(env, net.as_policy(), initial_extend(mu),
                                b.noise.empty() ? std::span<const std::size_t>{} : std::span<const std::size_t>(b.noise[static_cast<std::size_t>(r)]));
        expected += tr.total_cost() / 3.0;
      }
      CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  TEST_CASE("batched gradients equal the per-sample reference") {
    for (const auto& name : environment_names()) {
      CAPTURE(name);
      const auto env = make_environment(name);
      for (auto cls : {StoppingClass::asynchronous, StoppingClass::synchronous}) {
        const auto net = tiny_net(env, cls, 5);
        const Batch b = make_batch(env, 4, 12);
        const LossGrad fast = da_loss_gradient(env, net, b.nu0, b.noise, Exec::parallel);
        const LossGrad serial = da_loss_gradient(env, net, b.nu0, b.noise, Exec::serial);
        const LossGrad ref = da_loss_gradient_reference(env, net, b.nu0, b.noise);
        CHECK(fast.loss == serial.loss);
        CHECK(fast.grad == serial.grad);
        CHECK(fast.loss == doctest::Approx(ref.loss).epsilon(1e-13));
        double worst = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < ref.grad.size(); ++i) {
          worst = std::max(worst, std::abs(fast.grad[i] - ref.grad[i]));
          scale = std::max(scale, std::abs(ref.grad[i]));
        }
        CHECK(worst <= 1e-12 * std::max(scale, 1e-12));
      }
    }
  }

  TEST_CASE("grad_check is exact on a quadratic") {
    const GradLossFn quad = [](std::span<const double> p, std::vector<double>* g) {
      double f = 0.0;
      if (g) g->assign(p.size(), 0.0);
      for (std::size_t i = 0; i < p.size(); ++i) {
        f += (i + 1.0) * p[i] * p[i];
        if (g) (*g)[i] = 2.0 * (i + 1.0) * p[i];
      }
      return f;
    };
    Rng rng(1);
    const std::vector<double> p = {0.3, -1.2, 2.0, 0.7};
    CHECK(grad_check(quad, p, 4, 1e-4, rng).max_rel_error < 1e-9);
    const GradLossFn wrong = [&](std::span<const double> q, std::vector<double>* g) {
      const double f = quad(q, g);
      if (g) (*g)[0] *= 1.01;
      return f;
    };
    Rng rng2(1);
    CHECK(grad_check(wrong, p, 4, 1e-4, rng2).max_rel_error > 1e-3);
  }

  TEST_CASE("extrapolated differences survive curvature") {
    // d/dp exp(40 p): third derivative is 40^2 times the gradient
    const GradLossFn steep = [](std::span<const double> p, std::vector<double>* g) {
      double f = 3.0;
      if (g) g->assign(p.size(), 0.0);
      for (std::size_t i = 0; i < p.size(); ++i) {
        f += std::exp(40.0 * p[i]) / 40.0;
        if (g) (*g)[i] = std::exp(40.0 * p[i]);
      }
      return f;
    };
    const std::vector<double> p = {-0.05, 0.01, 0.05};
    Rng a(4), b(4), c(4);
    const double plain = grad_check(steep, p, 3, 1e-3, a).max_rel_error;
    const double extrapolated = grad_check(steep, p, 3, 1e-3, b, FiniteDifference::ridders).max_rel_error;
    CHECK(plain > 1e-4);
    CHECK(extrapolated < 1e-8);
    const GradLossFn wrong = [&](std::span<const double> q, std::vector<double>* g) {
      const double f = steep(q, g);
      if (g) (*g)[1] *= 1.001;
      return f;
    };
    CHECK(grad_check(wrong, p, 3, 1e-3, c, FiniteDifference::ridders).max_rel_error > 5e-4);
  }

  TEST_CASE("DA loss gradients match finite differences") {
    // ex1 at the small step; ex6 gradients are ~1e-8, where loss roundoff over
    // a 1e-5 step already reaches 1e-5 relative, so the larger step is used there
    const std::vector<std::pair<std::string, double>> cases = {{"ex1", 1e-5}, {"ex3", 1e-4}, {"ex6-M", 1e-4}};
    for (const auto& [name, step] : cases) {
      CAPTURE(name);
      const auto env = make_environment(name);
      const auto net = tiny_net(env, StoppingClass::asynchronous, 7);
      Batch b = make_batch(env, 2, 13);
      const auto loss = da_loss_fn(env, net, b.nu0, b.noise);
      Rng rng(17);
      const auto r = grad_check(loss, net.parameters().flat(), 5, step, rng);
      CHECK(r.max_rel_error < 1e-5);
    }
  }

  TEST_CASE("a synchronous network repeats one probability") {
    const auto env = make_environment("ex2");
    const auto net = tiny_net(env, StoppingClass::synchronous, 1);
    ad::Tape tape;
    const Binding bind_ = bind(net.parameters(), tape, false);
    const Matrix nu = make_batch(env, 3, 2).nu0;
    const Matrix h = tape.value(net.forward(tape, bind_, 0, tape.constant(nu)));
    for (Eigen::Index r = 0; r < 3; ++r)
      for (Eigen::Index x = 1; x < 6; ++x) CHECK(h(r, x) == h(r, 0));
  }
}
