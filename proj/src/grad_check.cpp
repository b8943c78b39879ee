#include "mfos/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mfos/trainers.hpp"

namespace mfos {

namespace {

struct Estimate {
  double value;
  double error;
};

// Neville tableau of central differences at steps h0, h0/2, ...; keeps the
// entry whose neighbours agree best and stops once the tableau degrades.
Estimate ridders(const std::function<double(double)>& central, double h0) {
  constexpr int kTab = 12;
  constexpr double kShrink = 2.0;
  constexpr double kSafe = 2.0;
  double a[kTab][kTab];
  double h = h0;
  a[0][0] = central(h);
  Estimate best{a[0][0], std::numeric_limits<double>::infinity()};
  for (int i = 1; i < kTab; ++i) {
    h /= kShrink;
    a[0][i] = central(h);
    double fac = kShrink * kShrink;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink * kShrink;
      const double err = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (err <= best.error) best = {a[j][i], err};
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * best.error) break;
  }
  return best;
}

}  // namespace

GradCheckResult grad_check(const GradLossFn& loss, std::span<const double> params, int probes, double step, Rng& rng,
                           FiniteDifference scheme) {
  if (probes < 1) throw std::invalid_argument("grad_check: probes must be at least 1");
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  if (params.empty()) throw std::invalid_argument("grad_check: no parameters");
  std::vector<double> theta(params.begin(), params.end());
  std::vector<double> grad;
  loss(theta, &grad);
  if (grad.size() != theta.size()) throw std::logic_error("grad_check: gradient size mismatch");

  // Distinct coordinates: partial Fisher-Yates shuffle.
  std::vector<std::size_t> order(theta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t count = std::min(order.size(), static_cast<std::size_t>(probes));
  for (std::size_t k = 0; k < count; ++k) std::swap(order[k], order[k + rng.uniform_index(order.size() - k)]);

  GradCheckResult r;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = order[k];
    const double orig = theta[i];
    auto central = [&](double h) {
      const double hi = orig + h;
      const double lo = orig - h;
      theta[i] = hi;
      const double up = loss(theta, nullptr);
      theta[i] = lo;
      const double down = loss(theta, nullptr);
      theta[i] = orig;
      // divide by the step that was actually taken after rounding
      return (up - down) / (hi - lo);
    };
    double fd = 0.0;
    if (scheme == FiniteDifference::central) {
      fd = central(step);
    } else {
      const Estimate a = ridders(central, 10.0 * step);
      const Estimate b = ridders(central, step);
      fd = a.error <= b.error ? a.value : b.value;
    }
    const double rel = std::abs(fd - grad[i]) / std::max(std::abs(grad[i]), 1e-8);
    r.coords.push_back(i);
    r.analytic.push_back(grad[i]);
    r.numeric.push_back(fd);
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  return r;
}

GradLossFn da_loss_fn(const Environment& env, const PolicyNetwork& net, Matrix nu0,
                      std::vector<std::vector<std::size_t>> noise_paths) {
  return [&env, net = PolicyNetwork(net), nu0 = std::move(nu0), noise = std::move(noise_paths)](std::span<const double> params,
                                                                           std::vector<double>* grad) mutable {
    auto flat = net.parameters().flat();
    if (params.size() != flat.size()) throw std::invalid_argument("da_loss_fn: parameter size mismatch");
    std::copy(params.begin(), params.end(), flat.begin());
    LossGrad lg = da_loss_gradient(env, net, nu0, noise);
    if (grad) *grad = std::move(lg.grad);
    return lg.loss;
  };
}

}  // namespace mfos
