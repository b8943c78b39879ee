#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mfos/environments.hpp"
#include "mfos/network.hpp"

namespace mfos {

// Loss at the given parameters; fills *grad with the analytic gradient when
// grad is non-null.
using GradLossFn = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<std::size_t> coords;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// central: one central difference at `step`.
// ridders: Richardson-extrapolated central differences over halving steps,
// started from both 10*step and step; the start with the smaller internal
// error estimate wins. Slower, but holds up when gradients are tiny next to
// the loss (roundoff) and when curvature is large (truncation).
enum class FiniteDifference { central, ridders };

// Compares against finite differences on `probes` distinct coordinates drawn
// from rng (all of them when probes exceeds the parameter count);
// relative error uses the denominator max(|g|, 1e-8).
GradCheckResult grad_check(const GradLossFn& loss, std::span<const double> params, int probes, double step, Rng& rng,
                           FiniteDifference scheme = FiniteDifference::central);

// Batch-mean DA loss of `net` as a function of its flat parameters.
GradLossFn da_loss_fn(const Environment& env, const PolicyNetwork& net, Matrix nu0,
                      std::vector<std::vector<std::size_t>> noise_paths);

}  // namespace mfos
