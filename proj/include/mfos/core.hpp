#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfos/rng.hpp"

namespace mfos {

struct GridShape {
  std::size_t width = 0;
  std::size_t height = 0;
};

// Finite state space X with an optional 1D/2D geometry annotation.
// Grid states are indexed row-major: index = row * width + col, where col is
// the first coordinate.
class StateSpace {
 public:
  StateSpace(std::vector<std::string> labels, std::optional<GridShape> grid = std::nullopt);

  static StateSpace line(std::size_t n, int first_label = 0);
  static StateSpace grid(std::size_t width, std::size_t height);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::size_t index_of(std::string_view label) const;

  const std::optional<GridShape>& geometry() const { return grid_; }
  bool is_grid() const { return grid_.has_value(); }
  std::size_t grid_index(std::size_t col, std::size_t row) const;
  std::pair<std::size_t, std::size_t> grid_coords(std::size_t index) const;

 private:
  std::vector<std::string> labels_;
  std::optional<GridShape> grid_;
};

// Probability vector on S = X x {stopped, alive}. Storage is the stopped slice
// nu(., 0) followed by the alive slice nu(., 1).
class ExtendedDistribution {
 public:
  static constexpr double kSumTolerance = 1e-12;
  static constexpr double kClampTolerance = 1e-15;

  // Validates; entries in [-1e-15, 0) are clamped and the vector renormalized.
  explicit ExtendedDistribution(std::vector<double> mass);

  static ExtendedDistribution from_slices(std::span<const double> stopped,
                                          std::span<const double> alive);

  std::size_t num_states() const { return mass_.size() / 2; }
  std::span<const double> mass() const { return mass_; }
  std::span<const double> stopped() const { return {mass_.data(), num_states()}; }
  std::span<const double> alive() const { return {mass_.data() + num_states(), num_states()}; }
  double stopped(std::size_t x) const { return mass_[x]; }
  double alive(std::size_t x) const { return mass_[num_states() + x]; }

  double total_alive() const;
  double total_stopped() const;

  bool operator==(const ExtendedDistribution&) const = default;

 private:
  std::vector<double> mass_;
};

// Per-state stopping probabilities h: X -> [0,1], or one scalar shared by all
// states (synchronous rule).
class StoppingRule {
 public:
  static StoppingRule per_state(std::vector<double> probs);
  static StoppingRule synchronous(double p);
  static StoppingRule stop_all(std::size_t num_states) {
    return per_state(std::vector<double>(num_states, 1.0));
  }

  bool is_synchronous() const { return synchronous_; }
  double at(std::size_t x) const { return synchronous_ ? probs_.front() : probs_.at(x); }
  std::vector<double> expand(std::size_t num_states) const;
  std::span<const double> values() const { return probs_; }

 private:
  StoppingRule(std::vector<double> probs, bool synchronous)
      : probs_(std::move(probs)), synchronous_(synchronous) {}
  std::vector<double> probs_;
  bool synchronous_ = false;
};

// Throws unless p is non-negative and sums to one within tol.
void validate_probability_vector(std::span<const double> p, double tol, std::string_view what);

ExtendedDistribution initial_extend(std::span<const double> mu0);

std::vector<double> marginal(const ExtendedDistribution& nu);

// Uniform sample from the (dim-1)-simplex via normalized unit exponentials.
std::vector<double> sample_simplex(Rng& rng, std::size_t dim);

double tv_distance(std::span<const double> a, std::span<const double> b);
double l2_distance(std::span<const double> a, std::span<const double> b);

}  // namespace mfos
