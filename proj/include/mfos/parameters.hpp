#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mfos/autodiff.hpp"
#include "mfos/linalg.hpp"

namespace mfos {

// Named matrices stored back to back in one flat array. Tensors can only be
// added before the store is frozen; shapes never change afterwards.
class ParameterStore {
 public:
  struct TensorInfo {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;

    bool operator==(const TensorInfo&) const = default;
  };

  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);
  void freeze() { frozen_ = true; }

  std::size_t num_tensors() const { return info_.size(); }
  std::size_t num_scalars() const { return values_.size(); }
  const TensorInfo& info(std::size_t i) const { return info_.at(i); }
  std::size_t index_of(const std::string& name) const;

  Eigen::Map<Matrix> tensor(std::size_t i);
  Eigen::Map<const Matrix> tensor(std::size_t i) const;
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  bool all_finite() const;
  bool operator==(const ParameterStore&) const = default;

 private:
  std::vector<TensorInfo> info_;
  std::vector<double> values_;
  bool frozen_ = false;
};

// The store's tensors as tape leaves.
struct Binding {
  std::vector<ad::Var> vars;
  bool trainable = false;
};
Binding bind(const ParameterStore& store, ad::Tape& tape, bool trainable);
// Copies leaf gradients into a flat vector aligned with the store.
std::vector<double> collect_gradients(const ParameterStore& store, const ad::Tape& tape, const Binding& binding);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  bool operator==(const AdamWState&) const = default;
};

// Decoupled weight decay: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state, const AdamWConfig& cfg);

// Exact text encoding of doubles (hexfloat), used by checkpoints and manifests.
std::string encode_double(double v);
double decode_double(const std::string& text);

}  // namespace mfos
