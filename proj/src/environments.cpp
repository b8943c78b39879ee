#include "mfos/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mfos_letters.hpp"

namespace mfos {

EnvironmentBuilder::EnvironmentBuilder(std::string name, StateSpace space, int horizon)
    : env_{std::move(name), std::move(space), horizon, {}, {}, {}, {}, false, false, {}, {}, std::nullopt, {}, false} {}

EnvironmentBuilder& EnvironmentBuilder::kernel(KernelFn fn, KernelVjpFn vjp) {
  env_.kernel = std::move(fn);
  env_.kernel_uses_mu = static_cast<bool>(vjp);
  env_.kernel_vjp = std::move(vjp);
  return *this;
}

EnvironmentBuilder& EnvironmentBuilder::running_cost(RunningCostFn fn, RunningCostVjpFn vjp, bool uses_mu) {
  env_.running_cost = std::move(fn);
  env_.running_cost_vjp = std::move(vjp);
  env_.cost_uses_mu = uses_mu;
  return *this;
}

EnvironmentBuilder& EnvironmentBuilder::terminal_cost(TerminalCostFn fn, TerminalCostVjpFn vjp) {
  env_.terminal_cost = std::move(fn);
  env_.terminal_cost_vjp = std::move(vjp);
  return *this;
}

EnvironmentBuilder& EnvironmentBuilder::common_noise(CommonNoise noise) {
  env_.common_noise = std::move(noise);
  return *this;
}

EnvironmentBuilder& EnvironmentBuilder::default_initial(std::vector<double> mu0) {
  env_.default_initial = std::move(mu0);
  return *this;
}

EnvironmentBuilder& EnvironmentBuilder::synchronous_only(bool flag) {
  env_.synchronous_only = flag;
  return *this;
}

EnvironmentBuilder& EnvironmentBuilder::kernel_uses_mu(bool flag) {
  env_.kernel_uses_mu = flag;
  return *this;
}

Environment EnvironmentBuilder::build() const {
  const std::size_t nx = env_.space.size();
  if (env_.horizon < 0) throw std::invalid_argument(env_.name + ": horizon must be non-negative");
  if (!env_.kernel) throw std::invalid_argument(env_.name + ": missing kernel");
  if (!env_.running_cost) throw std::invalid_argument(env_.name + ": missing running cost");
  if (env_.terminal_cost && !env_.terminal_cost_vjp) {
    throw std::invalid_argument(env_.name + ": terminal cost needs its gradient");
  }
  if (env_.common_noise && (env_.common_noise->cardinality == 0 || !env_.common_noise->sample)) {
    throw std::invalid_argument(env_.name + ": malformed common noise");
  }
  if (env_.default_initial.size() != nx) {
    throw std::invalid_argument(env_.name + ": default initial distribution has wrong size");
  }
  validate_probability_vector(env_.default_initial, 1e-9, env_.name + " default initial");

  const NoiseValue probe_noise = env_.common_noise ? NoiseValue{0} : std::nullopt;
  const Matrix q = env_.kernel(0, env_.default_initial, probe_noise);
  if (q.rows() != static_cast<Eigen::Index>(nx) || q.cols() != static_cast<Eigen::Index>(nx)) {
    throw std::invalid_argument(env_.name + ": kernel has wrong shape");
  }
  check_row_stochastic(q);
  if (env_.running_cost(env_.default_initial).size() != nx) {
    throw std::invalid_argument(env_.name + ": running cost has wrong size");
  }
  return env_;
}

void check_row_stochastic(const Matrix& q, double tol) {
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      const double v = q(r, c);
      if (!(v >= -tol && v <= 1.0 + tol)) {
        std::ostringstream msg;
        msg << "kernel entry (" << r << "," << c << ") = " << v << " outside [0,1]";
        throw std::domain_error(msg.str());
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "kernel row " << r << " sums to " << sum;
      throw std::domain_error(msg.str());
    }
  }
}

Environment with_horizon(Environment env, int horizon) {
  if (horizon < 0) throw std::invalid_argument("with_horizon: horizon must be non-negative");
  env.horizon = horizon;
  return env;
}

namespace {

std::vector<double> point_mass(std::size_t n, std::size_t at) {
  std::vector<double> mu(n, 0.0);
  mu.at(at) = 1.0;
  return mu;
}

// Phi(x, mu) = mu(x): local dependence on the population.
RunningCostFn local_density_cost() {
  return [](std::span<const double> mu) { return std::vector<double>(mu.begin(), mu.end()); };
}

RunningCostVjpFn local_density_cost_vjp() {
  return [](std::span<const double>, std::span<const double> grad_phi, std::span<double> grad_mu) {
    for (std::size_t x = 0; x < grad_mu.size(); ++x) grad_mu[x] += grad_phi[x];
  };
}

// Phi(x, mu) = value of the state label (1..6 for the die examples).
RunningCostFn state_value_cost(std::vector<double> values) {
  return [values = std::move(values)](std::span<const double>) { return values; };
}

Matrix shift_kernel_1d(std::size_t n) {
  Matrix q = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t x = 0; x < n; ++x) q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(std::min(x + 1, n - 1))) = 1.0;
  return q;
}

}  // namespace

Environment env_towards_uniform_1d() {
  static constexpr std::size_t kStates = 5;
  const Matrix q = shift_kernel_1d(kStates);
  return EnvironmentBuilder("ex1", StateSpace::line(kStates, 0), 4)
      .kernel([q](int, std::span<const double>, NoiseValue) { return q; })
      .running_cost(local_density_cost(), local_density_cost_vjp())
      .default_initial(point_mass(kStates, 0))
      .build();
}

Environment env_roll_die() {
  static constexpr std::size_t kStates = 6;
  const Matrix q = Matrix::Constant(kStates, kStates, 1.0 / 6.0);
  return EnvironmentBuilder("ex2", StateSpace::line(kStates, 1), 5)
      .kernel([q](int, std::span<const double>, NoiseValue) { return q; })
      .running_cost(state_value_cost({1, 2, 3, 4, 5, 6}), {}, false)
      .default_initial({0.25, 0.25, 0.0, 0.0, 0.5, 0.0})
      .build();
}

Environment env_congestion(double c_cong) {
  if (!(c_cong >= 0.0 && c_cong <= 1.0)) throw std::invalid_argument("env_congestion: C_cong must lie in [0,1]");
  static constexpr std::size_t kStates = 6;
  auto kernel = [c_cong](int, std::span<const double> mu, NoiseValue) {
    Matrix q(kStates, kStates);
    for (std::size_t x = 0; x < kStates; ++x) {
      const double stay = (1.0 + c_cong * mu[x]) / 6.0;
      const double move = (1.0 - c_cong * mu[x] / 5.0) / 6.0;
      for (std::size_t z = 0; z < kStates; ++z) {
        q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z)) = (z == x) ? stay : move;
      }
    }
    return q;
  };
  KernelVjpFn vjp;
  if (c_cong > 0.0) {
    vjp = [c_cong](int, std::span<const double>, NoiseValue, const Matrix& grad_q, std::span<double> grad_mu) {
      for (std::size_t x = 0; x < kStates; ++x) {
        double g = 0.0;
        for (std::size_t z = 0; z < kStates; ++z) {
          const double dq = (z == x) ? c_cong / 6.0 : -c_cong / 30.0;
          g += grad_q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z)) * dq;
        }
        grad_mu[x] += g;
      }
    };
  }
  return EnvironmentBuilder("ex3", StateSpace::line(kStates, 1), 4)
      .kernel(kernel, vjp)
      .running_cost(state_value_cost({1, 2, 3, 4, 5, 6}), {}, false)
      .default_initial({0.25, 0.25, 0.0, 0.0, 0.5, 0.0})
      .build();
}

Environment env_distributional() {
  static constexpr std::size_t kStates = 7;
  Matrix q = Matrix::Zero(kStates, kStates);
  for (std::size_t x = 0; x < kStates; ++x) {
    const auto r = static_cast<Eigen::Index>(x);
    q(r, r) += 0.5;
    // Blocked moves at the boundary stay put.
    q(r, x == 0 ? r : r - 1) += 0.25;
    q(r, x + 1 == kStates ? r : r + 1) += 0.25;
  }
  const std::vector<double> rho = {0.0, 0.0, 0.25, 0.5, 0.25, 0.0, 0.0};
  auto cost = [rho](std::span<const double> mu) {
    double d = 0.0;
    for (std::size_t z = 0; z < rho.size(); ++z) d += (mu[z] - rho[z]) * (mu[z] - rho[z]);
    return std::vector<double>(rho.size(), d);
  };
  auto cost_vjp = [rho](std::span<const double> mu, std::span<const double> grad_phi, std::span<double> grad_mu) {
    const double total = std::accumulate(grad_phi.begin(), grad_phi.end(), 0.0);
    for (std::size_t z = 0; z < rho.size(); ++z) grad_mu[z] += total * 2.0 * (mu[z] - rho[z]);
  };
  return EnvironmentBuilder("ex4", StateSpace::line(kStates, 1), 3)
      .kernel([q](int, std::span<const double>, NoiseValue) { return q; })
      .running_cost(cost, cost_vjp)
      .default_initial(point_mass(kStates, 3))
      .build();
}

Environment env_towards_uniform_2d() {
  constexpr std::size_t kSide = 5;
  StateSpace space = StateSpace::grid(kSide, kSide);
  Matrix q = Matrix::Zero(kSide * kSide, kSide * kSide);
  for (std::size_t row = 0; row < kSide; ++row) {
    for (std::size_t col = 0; col < kSide; ++col) {
      const auto from = static_cast<Eigen::Index>(space.grid_index(col, row));
      const auto to = static_cast<Eigen::Index>(space.grid_index(std::min(col + 1, kSide - 1), row));
      q(from, to) = 1.0;
    }
  }
  const std::size_t origin = space.grid_index(0, 0);
  return EnvironmentBuilder("ex5", std::move(space), 4)
      .kernel([q](int, std::span<const double>, NoiseValue) { return q; })
      .running_cost(local_density_cost(), local_density_cost_vjp())
      .default_initial(point_mass(kSide * kSide, origin))
      .build();
}

Environment env_drones(const TargetDistribution& target) {
  constexpr std::size_t kSide = 10;
  static constexpr std::size_t kStates = kSide * kSide;
  if (target.rho.size() != kStates) throw std::invalid_argument("env_drones: target must live on the 10x10 grid");
  validate_probability_vector(target.rho, 1e-9, "env_drones target");
  StateSpace space = StateSpace::grid(kSide, kSide);

  // Neighbour lists, fixed order: +row, -row, +col, -col.
  std::vector<std::vector<std::size_t>> neighbours(kStates);
  for (std::size_t row = 0; row < kSide; ++row) {
    for (std::size_t col = 0; col < kSide; ++col) {
      auto& nb = neighbours[space.grid_index(col, row)];
      if (row + 1 < kSide) nb.push_back(space.grid_index(col, row + 1));
      if (row > 0) nb.push_back(space.grid_index(col, row - 1));
      if (col + 1 < kSide) nb.push_back(space.grid_index(col + 1, row));
      if (col > 0) nb.push_back(space.grid_index(col - 1, row));
    }
  }
  auto kernel = [neighbours](int, std::span<const double>, NoiseValue obstacle) {
    Matrix q = Matrix::Zero(kStates, kStates);
    for (std::size_t x = 0; x < kStates; ++x) {
      const auto& nb = neighbours[x];
      const double share = 1.0 / static_cast<double>(nb.size());
      for (std::size_t y : nb) {
        const std::size_t dest = (obstacle && *obstacle == y) ? x : y;
        q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(dest)) += share;
      }
    }
    return q;
  };
  const std::vector<double> rho = target.rho;
  auto terminal = [rho](std::span<const double> mu) {
    double d = 0.0;
    for (std::size_t x = 0; x < rho.size(); ++x) d += (mu[x] - rho[x]) * (mu[x] - rho[x]);
    return d;
  };
  auto terminal_vjp = [rho](std::span<const double> mu, double g, std::span<double> grad_mu) {
    for (std::size_t x = 0; x < rho.size(); ++x) grad_mu[x] += g * 2.0 * (mu[x] - rho[x]);
  };
  CommonNoise noise{kStates, [](Rng& rng, int) { return rng.uniform_index(kStates); }};
  return EnvironmentBuilder("ex6", std::move(space), 50)
      .kernel(kernel)
      .running_cost([](std::span<const double> mu) { return std::vector<double>(mu.size(), 0.0); }, {}, false)
      .terminal_cost(terminal, terminal_vjp)
      .common_noise(noise)
      .default_initial(std::vector<double>(kStates, 1.0 / kStates))
      .build();
}

Environment env_randomized_better() {
  const Matrix q = (Matrix(2, 2) << 0.0, 1.0, 1.0, 0.0).finished();
  // Threshold at 1/2 with a 1e-12 allowance so exact halves computed in
  // floating point land on the cheap side.
  auto cost = [](std::span<const double> mu) {
    std::vector<double> phi(2);
    for (std::size_t x = 0; x < 2; ++x) phi[x] = mu[x] > 0.5 + 1e-12 ? 5.0 : 1.0;
    return phi;
  };
  return EnvironmentBuilder("randomized-better", StateSpace({"T", "C"}), 1)
      .kernel([q](int, std::span<const double>, NoiseValue) { return q; })
      // Piecewise constant in mu: zero derivative almost everywhere.
      .running_cost(cost, [](std::span<const double>, std::span<const double>, std::span<double>) {}, true)
      .default_initial({0.75, 0.25})
      .build();
}

TargetDistribution parse_letter_bitmap(std::string_view text) {
  std::vector<double> cells;
  std::size_t rows = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.size() != 10) throw std::invalid_argument("letter bitmap: rows must have 10 cells");
    for (char c : line) {
      if (c != '0' && c != '1') throw std::invalid_argument("letter bitmap: cells must be 0 or 1");
      cells.push_back(c == '1' ? 1.0 : 0.0);
    }
    ++rows;
  }
  if (rows != 10) throw std::invalid_argument("letter bitmap: expected 10 rows");
  const double count = std::accumulate(cells.begin(), cells.end(), 0.0);
  if (count == 0.0) throw std::invalid_argument("letter bitmap: no set cells");
  for (double& c : cells) c /= count;
  return {std::move(cells)};
}

std::string letter_bitmap(char letter) {
  switch (letter) {
    case 'M': return std::string(assets::kLetterM);
    case 'F': return std::string(assets::kLetterF);
    case 'O': return std::string(assets::kLetterO);
    case 'S': return std::string(assets::kLetterS);
    default: throw std::invalid_argument(std::string("unknown letter '") + letter + "' (expected M, F, O or S)");
  }
}

TargetDistribution letter_target(char letter) { return parse_letter_bitmap(letter_bitmap(letter)); }

std::vector<std::string> environment_names() {
  return {"ex1", "ex2", "ex3", "ex4", "ex5", "ex6-M", "ex6-F", "ex6-O", "ex6-S", "randomized-better"};
}

Environment make_environment(std::string_view name) {
  if (name == "ex1") return env_towards_uniform_1d();
  if (name == "ex2") return env_roll_die();
  if (name == "ex3") return env_congestion();
  if (name == "ex4") return env_distributional();
  if (name == "ex5") return env_towards_uniform_2d();
  if (name.size() == 5 && name.substr(0, 4) == "ex6-" && std::string_view("MFOS").find(name[4]) != std::string_view::npos) {
    Environment env = env_drones(letter_target(name[4]));
    env.name = std::string(name);
    return env;
  }
  if (name == "randomized-better") return env_randomized_better();
  std::string valid;
  for (const auto& n : environment_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown environment '" + std::string(name) + "' (valid: " + valid + ")");
}

}  // namespace mfos
