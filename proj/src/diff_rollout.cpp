#include "mfos/diff_rollout.hpp"

#include <stdexcept>
#include <string>

namespace mfos {

namespace {

template <class F>
void for_each_row(Eigen::Index rows, Exec exec, F&& f) {
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index b = 0; b < rows; ++b) f(b);
  } else {
    for (Eigen::Index b = 0; b < rows; ++b) f(b);
  }
}

std::vector<double> row_marginal(const Matrix& nu, Eigen::Index b, Eigen::Index ns) {
  std::vector<double> mu(static_cast<std::size_t>(ns));
  for (Eigen::Index x = 0; x < ns; ++x) mu[static_cast<std::size_t>(x)] = nu(b, x) + nu(b, ns + x);
  return mu;
}

void check_nu(const Environment& env, const Matrix& nu) {
  if (nu.cols() != static_cast<Eigen::Index>(2 * env.num_states()))
    throw std::invalid_argument("distribution batch must have 2|X| columns");
}

}  // namespace

ad::Var mf_step_batch(ad::Tape& tape, const Environment& env, int n, ad::Var nu, ad::Var h,
                      std::span<const NoiseValue> noise, Exec exec) {
  const Matrix& nv = tape.value(nu);
  const Matrix& hv = tape.value(h);
  check_nu(env, nv);
  const Eigen::Index batch = nv.rows();
  const auto ns = static_cast<Eigen::Index>(env.num_states());
  if (hv.rows() != batch || hv.cols() != ns) throw std::invalid_argument("mf_step_batch: rule batch has the wrong shape");
  if (!noise.empty() && static_cast<Eigen::Index>(noise.size()) != batch)
    throw std::invalid_argument("mf_step_batch: one noise value per batch row required");
  std::vector<NoiseValue> noise_copy(noise.begin(), noise.end());
  const auto noise_for = [noise_copy](Eigen::Index b) -> NoiseValue {
    return noise_copy.empty() ? std::nullopt : noise_copy[static_cast<std::size_t>(b)];
  };

  Matrix out(batch, 2 * ns);
  for_each_row(batch, exec, [&](Eigen::Index b) {
    const auto mu = row_marginal(nv, b, ns);
    const Matrix q = env.kernel(n, mu, noise_for(b));
    const RowVector alive = nv.row(b).tail(ns);
    const RowVector w = alive.cwiseProduct((1.0 - hv.row(b).array()).matrix());
    out.row(b).head(ns) = nv.row(b).head(ns) + alive.cwiseProduct(hv.row(b));
    out.row(b).tail(ns).noalias() = w * q;
  });

  return tape.record(std::move(out), {nu, h}, [&env, n, nu, h, noise_for, exec, ns](ad::Tape& tp, const Matrix& g) {
    const Matrix& nv = tp.value(nu);
    const Matrix& hv = tp.value(h);
    const bool need_nu = tp.requires_grad(nu);
    const bool need_h = tp.requires_grad(h);
    Matrix* dnu = need_nu ? &tp.grad_buffer(nu) : nullptr;
    Matrix* dh = need_h ? &tp.grad_buffer(h) : nullptr;
    for_each_row(nv.rows(), exec, [&](Eigen::Index b) {
      const auto mu = row_marginal(nv, b, ns);
      const Matrix q = env.kernel(n, mu, noise_for(b));
      const RowVector g0 = g.row(b).head(ns);
      const RowVector g1 = g.row(b).tail(ns);
      const RowVector alive = nv.row(b).tail(ns);
      const RowVector hb = hv.row(b);
      RowVector qg1(ns);
      qg1.noalias() = g1 * q.transpose();  // (Q G1)(z) = sum_x q(z,x) G1(x)
      if (dh) dh->row(b) += alive.cwiseProduct(g0 - qg1);
      if (dnu) {
        dnu->row(b).head(ns) += g0;
        dnu->row(b).tail(ns) += g0.cwiseProduct(hb) + (1.0 - hb.array()).matrix().cwiseProduct(qg1);
        if (env.kernel_vjp) {
          const RowVector w = alive.cwiseProduct((1.0 - hb.array()).matrix());
          const Matrix grad_q = w.transpose() * g1;
          std::vector<double> gmu(static_cast<std::size_t>(ns), 0.0);
          env.kernel_vjp(n, mu, noise_for(b), grad_q, gmu);
          for (Eigen::Index x = 0; x < ns; ++x) {
            (*dnu)(b, x) += gmu[static_cast<std::size_t>(x)];
            (*dnu)(b, ns + x) += gmu[static_cast<std::size_t>(x)];
          }
        }
      }
    });
  });
}

ad::Var step_cost_batch(ad::Tape& tape, const Environment& env, ad::Var nu, ad::Var h, Exec exec) {
  const Matrix& nv = tape.value(nu);
  const Matrix& hv = tape.value(h);
  check_nu(env, nv);
  const Eigen::Index batch = nv.rows();
  const auto ns = static_cast<Eigen::Index>(env.num_states());
  if (hv.rows() != batch || hv.cols() != ns) throw std::invalid_argument("step_cost_batch: rule batch has the wrong shape");
  Matrix out(batch, 1);
  for_each_row(batch, exec, [&](Eigen::Index b) {
    const auto phi = env.running_cost(row_marginal(nv, b, ns));
    double c = 0.0;
    for (Eigen::Index x = 0; x < ns; ++x) c += nv(b, ns + x) * phi[static_cast<std::size_t>(x)] * hv(b, x);
    out(b, 0) = c;
  });
  return tape.record(std::move(out), {nu, h}, [&env, nu, h, exec, ns](ad::Tape& tp, const Matrix& g) {
    const Matrix& nv = tp.value(nu);
    const Matrix& hv = tp.value(h);
    Matrix* dnu = tp.requires_grad(nu) ? &tp.grad_buffer(nu) : nullptr;
    Matrix* dh = tp.requires_grad(h) ? &tp.grad_buffer(h) : nullptr;
    for_each_row(nv.rows(), exec, [&](Eigen::Index b) {
      const auto mu = row_marginal(nv, b, ns);
      const auto phi = env.running_cost(mu);
      const double gb = g(b, 0);
      for (Eigen::Index x = 0; x < ns; ++x) {
        const double p = phi[static_cast<std::size_t>(x)];
        if (dh) (*dh)(b, x) += gb * nv(b, ns + x) * p;
        if (dnu) (*dnu)(b, ns + x) += gb * p * hv(b, x);
      }
      if (dnu && env.running_cost_vjp) {
        std::vector<double> gphi(static_cast<std::size_t>(ns));
        for (Eigen::Index x = 0; x < ns; ++x) gphi[static_cast<std::size_t>(x)] = gb * nv(b, ns + x) * hv(b, x);
        std::vector<double> gmu(static_cast<std::size_t>(ns), 0.0);
        env.running_cost_vjp(mu, gphi, gmu);
        for (Eigen::Index x = 0; x < ns; ++x) {
          (*dnu)(b, x) += gmu[static_cast<std::size_t>(x)];
          (*dnu)(b, ns + x) += gmu[static_cast<std::size_t>(x)];
        }
      }
    });
  });
}

ad::Var terminal_cost_batch(ad::Tape& tape, const Environment& env, ad::Var nu, Exec exec) {
  if (!env.has_terminal_cost()) throw std::logic_error("terminal_cost_batch: environment has no terminal cost");
  const Matrix& nv = tape.value(nu);
  check_nu(env, nv);
  const auto ns = static_cast<Eigen::Index>(env.num_states());
  Matrix out(nv.rows(), 1);
  for_each_row(nv.rows(), exec, [&](Eigen::Index b) { out(b, 0) = env.terminal_cost(row_marginal(nv, b, ns)); });
  return tape.record(std::move(out), {nu}, [&env, nu, exec, ns](ad::Tape& tp, const Matrix& g) {
    const Matrix& nv = tp.value(nu);
    Matrix& dnu = tp.grad_buffer(nu);
    for_each_row(nv.rows(), exec, [&](Eigen::Index b) {
      std::vector<double> gmu(static_cast<std::size_t>(ns), 0.0);
      env.terminal_cost_vjp(row_marginal(nv, b, ns), g(b, 0), gmu);
      for (Eigen::Index x = 0; x < ns; ++x) {
        dnu(b, x) += gmu[static_cast<std::size_t>(x)];
        dnu(b, ns + x) += gmu[static_cast<std::size_t>(x)];
      }
    });
  });
}

ad::Var rollout_costs(ad::Tape& tape, const Environment& env, const TapePolicy& policy, ad::Var nu0, int start_time,
                      const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec) {
  const Eigen::Index batch = tape.value(nu0).rows();
  const auto ns = static_cast<Eigen::Index>(env.num_states());
  const int horizon = env.horizon;
  if (start_time < 0 || start_time > horizon) throw std::invalid_argument("rollout_costs: start time outside [0, T]");
  if (env.has_common_noise()) {
    if (static_cast<Eigen::Index>(noise_paths.size()) != batch)
      throw std::invalid_argument("rollout_costs: one noise path per batch row required");
    for (const auto& p : noise_paths)
      if (p.size() != static_cast<std::size_t>(horizon))
        throw std::invalid_argument("rollout_costs: noise paths must hold T values");
  } else if (!noise_paths.empty()) {
    throw std::invalid_argument("rollout_costs: noise paths given for a noise-free environment");
  }

  ad::Var nu = nu0;
  ad::Var total;
  std::vector<NoiseValue> noise;
  for (int m = start_time; m <= horizon; ++m) {
    const ad::Var h = m == horizon ? tape.constant(Matrix::Ones(batch, ns)) : policy(tape, m, nu);
    const ad::Var c = step_cost_batch(tape, env, nu, h, exec);
    total = total.valid() ? ad::add(tape, total, c) : c;
    if (m == horizon) break;
    noise.clear();
    if (env.has_common_noise())
      for (const auto& p : noise_paths) noise.emplace_back(p[static_cast<std::size_t>(m)]);
    nu = mf_step_batch(tape, env, m, nu, h, noise, exec);
  }
  // The forced stop at T leaves the marginal unchanged.
  if (env.has_terminal_cost()) total = ad::add(tape, total, terminal_cost_batch(tape, env, nu, exec));
  return total;
}

ad::Var mean_rollout_cost(ad::Tape& tape, const Environment& env, const TapePolicy& policy, ad::Var nu0,
                          int start_time, const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec) {
  const ad::Var costs = rollout_costs(tape, env, policy, nu0, start_time, noise_paths, exec);
  const double batch = static_cast<double>(tape.value(costs).rows());
  return ad::scale(tape, ad::sum(tape, costs), 1.0 / batch);
}

}  // namespace mfos
