#include "mfos/trainers.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "mfos/diff_rollout.hpp"

namespace mfos {

std::string to_string(Algorithm a) { return a == Algorithm::da ? "da" : "dp"; }

Algorithm parse_algorithm(std::string_view text) {
  if (text == "da") return Algorithm::da;
  if (text == "dp") return Algorithm::dp;
  throw std::invalid_argument("unknown algorithm '" + std::string(text) + "' (expected da or dp)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.n_iter < 1) throw std::invalid_argument("n_iter must be at least 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw std::invalid_argument("learning rate must be positive");
  if (cfg.eval_every < 1) throw std::invalid_argument("eval_every must be at least 1");
  if (cfg.mc_paths < 1) throw std::invalid_argument("mc_paths must be at least 1");
  if (cfg.blocks < 0 || cfg.width < 0) throw std::invalid_argument("network size overrides must be non-negative");
}

double TrainReport::final_test_loss() const {
  if (evals.empty()) throw std::logic_error("train report has no evaluation");
  return evals.back().test_loss;
}

TrainingDiverged::TrainingDiverged(int stage, int iteration, const std::string& what)
    : std::runtime_error(what), stage_(stage), iteration_(iteration) {}

NetworkConfig network_config_for(const Environment& env, const TrainConfig& cfg, bool time_conditioned) {
  NetworkConfig nc = default_network_config(env, cfg.stopping_class, time_conditioned);
  if (cfg.blocks > 0) nc.blocks = cfg.blocks;
  if (cfg.width > 0) nc.width = cfg.width;
  return nc;
}

Matrix sample_da_batch(Rng& rng, std::size_t num_states, int batch) {
  const auto ns = static_cast<Eigen::Index>(num_states);
  Matrix nu = Matrix::Zero(batch, 2 * ns);
  for (int b = 0; b < batch; ++b) {
    const auto mu = sample_simplex(rng, num_states);
    for (Eigen::Index x = 0; x < ns; ++x) nu(b, ns + x) = mu[static_cast<std::size_t>(x)];
  }
  return nu;
}

Matrix sample_dp_batch(Rng& rng, std::size_t num_states, int batch) {
  const auto ns = static_cast<Eigen::Index>(num_states);
  Matrix nu(batch, 2 * ns);
  for (int b = 0; b < batch; ++b) {
    const auto v = sample_simplex(rng, 2 * num_states);
    for (Eigen::Index i = 0; i < 2 * ns; ++i) nu(b, i) = v[static_cast<std::size_t>(i)];
  }
  return nu;
}

std::vector<std::vector<std::size_t>> sample_noise_paths(const Environment& env, const Rng& rng, int batch) {
  std::vector<std::vector<std::size_t>> paths;
  if (!env.has_common_noise()) return paths;
  for (int b = 0; b < batch; ++b) {
    Rng stream = rng.split(static_cast<std::uint64_t>(b));
    paths.push_back(sample_noise_path(env, stream));
  }
  return paths;
}

namespace {

// Single-row matrix view of one batch element.
Matrix row_of(const Matrix& m, Eigen::Index b) { return m.row(b); }

TapePolicy network_policy(const PolicyNetwork& net, const Binding& binding) {
  return [&net, &binding](ad::Tape& tape, int n, ad::Var nu) { return net.forward(tape, binding, n, nu); };
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double mean_eval(const Environment& env, const std::vector<std::vector<double>>& dists,
                 const std::function<double(std::span<const double>)>& eval_one) {
  double total = 0.0;
  if (dists.empty()) return eval_one(env.default_initial);
  for (const auto& mu : dists) total += eval_one(mu);
  return total / static_cast<double>(dists.size());
}

std::size_t eval_paths(const Environment& env, const TrainConfig& cfg) {
  return env.has_common_noise() ? cfg.mc_paths : 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr std::uint64_t kInitStream = 0x1000000000ULL;
constexpr std::uint64_t kStageStream = 0x2000000000ULL;

}  // namespace

LossGrad da_loss_gradient(const Environment& env, const PolicyNetwork& net, const Matrix& nu0,
                          const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec) {
  ad::Tape tape;
  const Binding binding = bind(net.parameters(), tape, true);
  const ad::Var in = tape.constant(nu0);
  const ad::Var loss = mean_rollout_cost(tape, env, network_policy(net, binding), in, 0, noise_paths, exec);
  tape.backward(loss);
  return {tape.value(loss)(0, 0), collect_gradients(net.parameters(), tape, binding)};
}

LossGrad da_loss_gradient_reference(const Environment& env, const PolicyNetwork& net, const Matrix& nu0,
                                    const std::vector<std::vector<std::size_t>>& noise_paths) {
  LossGrad total;
  total.grad.assign(net.parameters().num_scalars(), 0.0);
  const Eigen::Index batch = nu0.rows();
  for (Eigen::Index b = 0; b < batch; ++b) {
    std::vector<std::vector<std::size_t>> one;
    if (!noise_paths.empty()) one.push_back(noise_paths[static_cast<std::size_t>(b)]);
    const LossGrad lg = da_loss_gradient(env, net, row_of(nu0, b), one, Exec::serial);
    total.loss += lg.loss;
    for (std::size_t i = 0; i < lg.grad.size(); ++i) total.grad[i] += lg.grad[i];
  }
  const double inv = 1.0 / static_cast<double>(batch);
  total.loss *= inv;
  for (double& g : total.grad) g *= inv;
  return total;
}

LossGrad dp_stage_loss_gradient(const Environment& env, const PolicyNetwork& net, int stage,
                                std::span<const PolicyNetwork> future, const Matrix& nu,
                                const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec) {
  if (stage < 0 || stage >= env.horizon) throw std::invalid_argument("dp stage outside [0, T)");
  if (future.size() != static_cast<std::size_t>(env.horizon - stage - 1))
    throw std::invalid_argument("dp stage needs one frozen network per later time");
  ad::Tape tape;
  const Binding binding = bind(net.parameters(), tape, true);
  std::vector<Binding> frozen;
  frozen.reserve(future.size());
  for (const auto& f : future) frozen.push_back(bind(f.parameters(), tape, false));
  const TapePolicy policy = [&](ad::Tape& tp, int m, ad::Var v) {
    if (m == stage) return net.forward(tp, binding, m, v);
    const auto k = static_cast<std::size_t>(m - stage - 1);
    return future[k].forward(tp, frozen[k], m, v);
  };
  const ad::Var in = tape.constant(nu);
  const ad::Var loss = mean_rollout_cost(tape, env, policy, in, stage, noise_paths, exec);
  tape.backward(loss);
  return {tape.value(loss)(0, 0), collect_gradients(net.parameters(), tape, binding)};
}

double evaluate(const Environment& env, const Policy& policy, std::span<const double> mu0, std::size_t mc_paths,
                std::uint64_t seed, int start_time) {
  const auto nu0 = initial_extend(mu0);
  return social_cost(env, policy, nu0, Rng(seed), env.has_common_noise() ? mc_paths : 1, start_time);
}

double evaluate(const Environment& env, const PolicyNetwork& net, std::span<const double> mu0, std::size_t mc_paths,
                std::uint64_t seed) {
  if (net.config().num_states != env.num_states()) throw std::invalid_argument("evaluate: network/environment size mismatch");
  return evaluate(env, net.as_policy(), mu0, mc_paths, seed);
}

double evaluate(const Environment& env, const std::vector<PolicyNetwork>& nets, std::span<const double> mu0,
                std::size_t mc_paths, std::uint64_t seed) {
  if (nets.size() != static_cast<std::size_t>(env.horizon))
    throw std::invalid_argument("evaluate: expected " + std::to_string(env.horizon) + " per-time networks, got " +
                                std::to_string(nets.size()));
  return evaluate(env, dp_policy(nets), mu0, mc_paths, seed);
}

DaResult train_da(const Environment& env, const TrainConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Rng master(cfg.seed);
  PolicyNetwork net(network_config_for(env, cfg, true), master.split(kInitStream).seed());
  AdamWState opt;
  TrainReport report;
  report.lr = cfg.lr;
  const AdamWConfig adam = cfg.optimizer();
  const std::size_t paths = eval_paths(env, cfg);

  Matrix fixed_batch;
  std::vector<std::vector<std::size_t>> fixed_noise;
  for (int k = 0; k < cfg.n_iter; ++k) {
    Matrix batch;
    std::vector<std::vector<std::size_t>> noise;
    if (cfg.resample || k == 0) {
      Rng it = master.split(static_cast<std::uint64_t>(k));
      batch = sample_da_batch(it, env.num_states(), cfg.batch_size);
      noise = sample_noise_paths(env, it.split(1), cfg.batch_size);
      if (!cfg.resample) {
        fixed_batch = batch;
        fixed_noise = noise;
      }
    } else {
      batch = fixed_batch;
      noise = fixed_noise;
    }
    LossGrad lg;
    try {
      lg = da_loss_gradient(env, net, batch, noise, cfg.exec);
    } catch (const std::domain_error& e) {
      throw TrainingDiverged(-1, k, "DA training diverged at iteration " + std::to_string(k) + ": " + e.what());
    }
    if (!std::isfinite(lg.loss) || !all_finite(lg.grad))
      throw TrainingDiverged(-1, k, "DA training diverged at iteration " + std::to_string(k));
    adamw_step(net.parameters().flat(), lg.grad, opt, adam);
    report.train_loss.push_back(lg.loss);
    if (cfg.on_iteration) cfg.on_iteration(-1, k, lg.loss);
    if ((k + 1) % cfg.eval_every == 0 || k + 1 == cfg.n_iter) {
      const double test = mean_eval(env, cfg.eval_distributions,
                                    [&](std::span<const double> mu) { return evaluate(env, net, mu, paths); });
      if (!std::isfinite(test)) throw TrainingDiverged(-1, k, "DA test loss is not finite at iteration " + std::to_string(k));
      report.evals.push_back({k + 1, test});
      if (cfg.on_eval) cfg.on_eval(-1, k + 1, net.as_policy());
    }
  }
  report.wall_seconds = seconds_since(t0);
  return {std::move(net), std::move(opt), std::move(report)};
}

DpResult train_dp(const Environment& env, const TrainConfig& cfg) {
  validate(cfg);
  if (env.horizon < 1) throw std::invalid_argument("DP training needs a horizon of at least 1");
  const Rng master(cfg.seed);
  const AdamWConfig adam = cfg.optimizer();
  const std::size_t paths = eval_paths(env, cfg);
  const auto horizon = static_cast<std::size_t>(env.horizon);
  const NetworkConfig nc = network_config_for(env, cfg, false);

  // Trained back to front; later stages are pushed first and reversed at the end.
  std::vector<PolicyNetwork> trained;
  std::vector<AdamWState> opts;
  std::vector<TrainReport> reports;
  for (int n = env.horizon - 1; n >= 0; --n) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rng stage_rng = master.split(kStageStream + static_cast<std::uint64_t>(n));
    PolicyNetwork net(nc, stage_rng.split(kInitStream).seed());
    AdamWState opt;
    TrainReport report;
    report.stage = n;
    report.lr = cfg.lr;
    // future[m - n - 1] plays at time m.
    std::vector<PolicyNetwork> future(trained.rbegin(), trained.rend());

    Matrix fixed_batch;
    std::vector<std::vector<std::size_t>> fixed_noise;
    for (int k = 0; k < cfg.n_iter; ++k) {
      Matrix batch;
      std::vector<std::vector<std::size_t>> noise;
      if (cfg.resample || k == 0) {
        Rng it = stage_rng.split(static_cast<std::uint64_t>(k));
        batch = sample_dp_batch(it, env.num_states(), cfg.batch_size);
        noise = sample_noise_paths(env, it.split(1), cfg.batch_size);
        if (!cfg.resample) {
          fixed_batch = batch;
          fixed_noise = noise;
        }
      } else {
        batch = fixed_batch;
        noise = fixed_noise;
      }
      LossGrad lg;
      try {
        lg = dp_stage_loss_gradient(env, net, n, future, batch, noise, cfg.exec);
      } catch (const std::domain_error& e) {
        throw TrainingDiverged(n, k, "DP stage " + std::to_string(n) + " diverged at iteration " + std::to_string(k) +
                                         ": " + e.what());
      }
      if (!std::isfinite(lg.loss) || !all_finite(lg.grad))
        throw TrainingDiverged(n, k, "DP stage " + std::to_string(n) + " diverged at iteration " + std::to_string(k));
      adamw_step(net.parameters().flat(), lg.grad, opt, adam);
      report.train_loss.push_back(lg.loss);
      if (cfg.on_iteration) cfg.on_iteration(n, k, lg.loss);
      if ((k + 1) % cfg.eval_every == 0 || k + 1 == cfg.n_iter) {
        std::vector<PolicyNetwork> play;
        play.reserve(horizon);
        for (int m = 0; m < n; ++m) play.push_back(net);  // unused before stage n
        play.push_back(net);
        play.insert(play.end(), future.begin(), future.end());
        const Policy policy = dp_policy(std::move(play));
        const double test = mean_eval(env, cfg.eval_distributions, [&](std::span<const double> mu) {
          return evaluate(env, policy, mu, paths, kEvalSeed, n);
        });
        if (!std::isfinite(test))
          throw TrainingDiverged(n, k, "DP stage " + std::to_string(n) + " test loss is not finite");
        report.evals.push_back({k + 1, test});
        if (cfg.on_eval) cfg.on_eval(n, k + 1, policy);
      }
    }
    report.wall_seconds = seconds_since(t0);
    trained.push_back(std::move(net));
    opts.push_back(std::move(opt));
    reports.push_back(std::move(report));
  }
  DpResult result;
  result.networks.assign(std::make_move_iterator(trained.rbegin()), std::make_move_iterator(trained.rend()));
  result.optimizers.assign(std::make_move_iterator(opts.rbegin()), std::make_move_iterator(opts.rend()));
  result.reports.assign(std::make_move_iterator(reports.rbegin()), std::make_move_iterator(reports.rend()));
  return result;
}

std::vector<SweepEntry> lr_sweep(const Environment& env, Algorithm algo, std::span<const double> lrs,
                                 const TrainConfig& cfg) {
  if (lrs.empty()) throw std::invalid_argument("lr_sweep: no learning rates given");
  std::vector<SweepEntry> out;
  for (double lr : lrs) {
    TrainConfig c = cfg;
    c.lr = lr;
    SweepEntry e;
    e.lr = lr;
    if (algo == Algorithm::da) {
      e.reports.push_back(train_da(env, c).report);
      e.final_test_loss = e.reports.front().final_test_loss();
    } else {
      e.reports = train_dp(env, c).reports;
      e.final_test_loss = e.reports.front().final_test_loss();
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_train_report_csv(std::ostream& out, const std::vector<TrainReport>& reports) {
  out << "# mfos-train-report v1\n";
  out << "stage,iteration,train_loss,test_loss\n";
  out.precision(17);
  for (const auto& r : reports) {
    std::size_t e = 0;
    for (std::size_t k = 0; k < r.train_loss.size(); ++k) {
      const int it = static_cast<int>(k) + 1;
      out << r.stage << ',' << it << ',' << r.train_loss[k] << ',';
      if (e < r.evals.size() && r.evals[e].iteration == it) out << r.evals[e++].test_loss;
      out << '\n';
    }
  }
}

}  // namespace mfos
