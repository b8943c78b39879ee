#include "mfos/parameters.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace mfos {

std::size_t ParameterStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (frozen_) throw std::logic_error("ParameterStore: cannot add '" + name + "' after construction");
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("ParameterStore: empty tensor '" + name + "'");
  for (const auto& t : info_)
    if (t.name == name) throw std::invalid_argument("ParameterStore: duplicate tensor '" + name + "'");
  info_.push_back({std::move(name), rows, cols, values_.size()});
  values_.resize(values_.size() + static_cast<std::size_t>(rows * cols), 0.0);
  return info_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < info_.size(); ++i)
    if (info_[i].name == name) return i;
  throw std::out_of_range("ParameterStore: no tensor named '" + name + "'");
}

Eigen::Map<Matrix> ParameterStore::tensor(std::size_t i) {
  const auto& t = info_.at(i);
  return {values_.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<const Matrix> ParameterStore::tensor(std::size_t i) const {
  const auto& t = info_.at(i);
  return {values_.data() + t.offset, t.rows, t.cols};
}

bool ParameterStore::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

Binding bind(const ParameterStore& store, ad::Tape& tape, bool trainable) {
  Binding b;
  b.trainable = trainable;
  b.vars.reserve(store.num_tensors());
  for (std::size_t i = 0; i < store.num_tensors(); ++i) {
    const ad::Var v = tape.leaf(Matrix(store.tensor(i)), trainable);
    tape.set_label(v, store.info(i).name);
    b.vars.push_back(v);
  }
  return b;
}

std::vector<double> collect_gradients(const ParameterStore& store, const ad::Tape& tape, const Binding& binding) {
  if (binding.vars.size() != store.num_tensors()) throw std::invalid_argument("collect_gradients: binding mismatch");
  std::vector<double> out(store.num_scalars(), 0.0);
  for (std::size_t i = 0; i < store.num_tensors(); ++i) {
    if (!tape.has_grad(binding.vars[i])) continue;
    const Matrix g = tape.grad(binding.vars[i]);
    const auto& info = store.info(i);
    if (g.rows() != info.rows || g.cols() != info.cols)
      throw std::logic_error("collect_gradients: gradient shape mismatch for " + info.name);
    std::copy(g.data(), g.data() + g.size(), out.begin() + static_cast<std::ptrdiff_t>(info.offset));
  }
  return out;
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adamw_step: parameter/gradient size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw std::domain_error("adamw_step: non-finite gradient at index " + std::to_string(i));
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adamw_step: optimizer state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

std::string encode_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double decode_double(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw std::invalid_argument("cannot parse number '" + text + "'");
  return v;
}

}  // namespace mfos
