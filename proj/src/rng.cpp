#include "mfos/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfos {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::exponential() {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform());
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
  const auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(idx, n - 1);
}

std::size_t Rng::categorical(std::span<const double> cumulative) {
  if (cumulative.empty()) throw std::invalid_argument("Rng::categorical: empty weights");
  const double u = uniform() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  auto idx = static_cast<std::size_t>(it - cumulative.begin());
  if (idx < cumulative.size()) return idx;
  // u rounded up to the total: take the last bin with positive width.
  idx = cumulative.size() - 1;
  while (idx > 0 && cumulative[idx] == cumulative[idx - 1]) --idx;
  return idx;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

}  // namespace mfos
