#include "mfos/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mfos {

StateSpace::StateSpace(std::vector<std::string> labels, std::optional<GridShape> grid)
    : labels_(std::move(labels)), grid_(grid) {
  if (labels_.empty()) throw std::invalid_argument("StateSpace: needs at least one state");
  if (grid_ && grid_->width * grid_->height != labels_.size()) {
    throw std::invalid_argument("StateSpace: grid width*height must equal the number of states");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    for (std::size_t j = i + 1; j < labels_.size(); ++j) {
      if (labels_[i] == labels_[j]) {
        throw std::invalid_argument("StateSpace: duplicate state label '" + labels_[i] + "'");
      }
    }
  }
}

StateSpace StateSpace::line(std::size_t n, int first_label) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(first_label + static_cast<int>(i)));
  return StateSpace(std::move(labels));
}

StateSpace StateSpace::grid(std::size_t width, std::size_t height) {
  std::vector<std::string> labels;
  labels.reserve(width * height);
  for (std::size_t row = 0; row < height; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      labels.push_back("(" + std::to_string(col) + "," + std::to_string(row) + ")");
    }
  }
  return StateSpace(std::move(labels), GridShape{width, height});
}

std::size_t StateSpace::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw std::out_of_range("StateSpace: unknown state '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t StateSpace::grid_index(std::size_t col, std::size_t row) const {
  if (!grid_) throw std::logic_error("StateSpace: not a grid");
  if (col >= grid_->width || row >= grid_->height) throw std::out_of_range("StateSpace: grid cell out of range");
  return row * grid_->width + col;
}

std::pair<std::size_t, std::size_t> StateSpace::grid_coords(std::size_t index) const {
  if (!grid_) throw std::logic_error("StateSpace: not a grid");
  if (index >= size()) throw std::out_of_range("StateSpace: index out of range");
  return {index % grid_->width, index / grid_->width};
}

void validate_probability_vector(std::span<const double> p, double tol, std::string_view what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty probability vector");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) {
      std::ostringstream msg;
      msg << what << ": entry " << i << " is " << p[i];
      throw std::invalid_argument(msg.str());
    }
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": mass " << sum << " is not 1";
    throw std::invalid_argument(msg.str());
  }
}

ExtendedDistribution::ExtendedDistribution(std::vector<double> mass) : mass_(std::move(mass)) {
  if (mass_.empty() || mass_.size() % 2 != 0) {
    throw std::invalid_argument("ExtendedDistribution: size must be 2|X| with |X| >= 1");
  }
  bool clamped = false;
  for (double& m : mass_) {
    if (m < 0.0 && m >= -kClampTolerance) {
      m = 0.0;
      clamped = true;
    }
  }
  if (clamped) {
    const double sum = std::accumulate(mass_.begin(), mass_.end(), 0.0);
    if (sum > 0.0) {
      for (double& m : mass_) m /= sum;
    }
  }
  validate_probability_vector(mass_, kSumTolerance, "ExtendedDistribution");
}

ExtendedDistribution ExtendedDistribution::from_slices(std::span<const double> stopped,
                                                       std::span<const double> alive) {
  if (stopped.size() != alive.size()) throw std::invalid_argument("ExtendedDistribution: slice size mismatch");
  std::vector<double> mass(stopped.begin(), stopped.end());
  mass.insert(mass.end(), alive.begin(), alive.end());
  return ExtendedDistribution(std::move(mass));
}

double ExtendedDistribution::total_alive() const {
  auto a = alive();
  return std::accumulate(a.begin(), a.end(), 0.0);
}

double ExtendedDistribution::total_stopped() const {
  auto s = stopped();
  return std::accumulate(s.begin(), s.end(), 0.0);
}

StoppingRule StoppingRule::per_state(std::vector<double> probs) {
  if (probs.empty()) throw std::invalid_argument("StoppingRule: empty rule");
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("StoppingRule: probability outside [0,1]");
  }
  return StoppingRule(std::move(probs), false);
}

StoppingRule StoppingRule::synchronous(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("StoppingRule: probability outside [0,1]");
  return StoppingRule({p}, true);
}

std::vector<double> StoppingRule::expand(std::size_t num_states) const {
  if (synchronous_) return std::vector<double>(num_states, probs_.front());
  if (probs_.size() != num_states) throw std::invalid_argument("StoppingRule: rule size does not match |X|");
  return probs_;
}

ExtendedDistribution initial_extend(std::span<const double> mu0) {
  validate_probability_vector(mu0, 1e-9, "initial_extend");
  std::vector<double> mass(2 * mu0.size(), 0.0);
  std::copy(mu0.begin(), mu0.end(), mass.begin() + static_cast<std::ptrdiff_t>(mu0.size()));
  // Absorb the accepted 1e-9 slack so the stricter extended invariant holds.
  const double sum = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= sum;
  return ExtendedDistribution(std::move(mass));
}

std::vector<double> marginal(const ExtendedDistribution& nu) {
  std::vector<double> mu(nu.num_states());
  for (std::size_t x = 0; x < mu.size(); ++x) mu[x] = nu.stopped(x) + nu.alive(x);
  return mu;
}

std::vector<double> sample_simplex(Rng& rng, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("sample_simplex: dim must be positive");
  if (dim == 1) return {1.0};
  std::vector<double> p(dim);
  double sum = 0.0;
  for (double& v : p) {
    v = rng.exponential();
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace {
void check_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}
}  // namespace

double tv_distance(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b, "tv_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace mfos
