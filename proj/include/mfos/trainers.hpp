#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mfos/environments.hpp"
#include "mfos/exec.hpp"
#include "mfos/mean_field.hpp"
#include "mfos/network.hpp"
#include "mfos/parameters.hpp"

namespace mfos {

enum class Algorithm { da, dp };
std::string to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view text);

// Seed for Monte Carlo evaluation of common-noise environments; fixed so
// test losses are comparable across runs.
inline constexpr std::uint64_t kEvalSeed = 0x5eed0fe7a1ULL;

struct TrainConfig {
  int n_iter = 500;
  int batch_size = 128;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  int eval_every = 100;
  // Test distributions on X; empty means the environment's default mu0.
  std::vector<std::vector<double>> eval_distributions;
  std::size_t mc_paths = 1;
  StoppingClass stopping_class = StoppingClass::asynchronous;
  // Architecture overrides; 0 keeps the default for the environment.
  int blocks = 0;
  int width = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  // false: every iteration reuses the batch drawn at iteration 0.
  bool resample = true;
  Exec exec = Exec::parallel;
  // Called after every iteration with (stage, iteration, train loss); stage is -1 for DA.
  std::function<void(int, int, double)> on_iteration;
  // Called after every evaluation with (stage, iteration, policy under test);
  // a DP stage-n policy is meant to be played from time n.
  std::function<void(int, int, const Policy&)> on_eval;

  AdamWConfig optimizer() const { return {lr, beta1, beta2, adam_eps, weight_decay}; }
};

void validate(const TrainConfig& cfg);

struct EvalRecord {
  int iteration = 0;
  double test_loss = 0.0;
};

struct TrainReport {
  int stage = -1;  // DP stage, -1 for DA
  double lr = 0.0;
  std::vector<double> train_loss;
  std::vector<EvalRecord> evals;
  double wall_seconds = 0.0;

  double final_test_loss() const;
};

struct DaResult {
  PolicyNetwork network;
  AdamWState optimizer;
  TrainReport report;
};

struct DpResult {
  std::vector<PolicyNetwork> networks;  // index n plays at time n
  std::vector<AdamWState> optimizers;
  std::vector<TrainReport> reports;     // index n is stage n
};

// Raised when a loss or gradient stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int stage, int iteration, const std::string& what);
  int stage() const { return stage_; }
  int iteration() const { return iteration_; }

 private:
  int stage_;
  int iteration_;
};

NetworkConfig network_config_for(const Environment& env, const TrainConfig& cfg, bool time_conditioned);

DaResult train_da(const Environment& env, const TrainConfig& cfg);
DpResult train_dp(const Environment& env, const TrainConfig& cfg);

// J on initial_extend(mu0), or from start_time when given. Common-noise
// environments average mc_paths paths drawn from Rng(seed).
double evaluate(const Environment& env, const Policy& policy, std::span<const double> mu0, std::size_t mc_paths,
                std::uint64_t seed = kEvalSeed, int start_time = 0);
double evaluate(const Environment& env, const PolicyNetwork& net, std::span<const double> mu0, std::size_t mc_paths,
                std::uint64_t seed = kEvalSeed);
double evaluate(const Environment& env, const std::vector<PolicyNetwork>& nets, std::span<const double> mu0,
                std::size_t mc_paths, std::uint64_t seed = kEvalSeed);

struct SweepEntry {
  double lr = 0.0;
  std::vector<TrainReport> reports;  // one for DA, T for DP
  double final_test_loss = 0.0;
};
std::vector<SweepEntry> lr_sweep(const Environment& env, Algorithm algo, std::span<const double> lrs,
                                 const TrainConfig& cfg);

// Columns: stage, iteration, train_loss, test_loss (empty when not evaluated).
void write_train_report_csv(std::ostream& out, const std::vector<TrainReport>& reports);

// Loss and flat gradient of the batch-mean DA objective.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
LossGrad da_loss_gradient(const Environment& env, const PolicyNetwork& net, const Matrix& nu0,
                          const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec = Exec::parallel);
// Serial reference: one tape per batch element, gradients averaged in order.
LossGrad da_loss_gradient_reference(const Environment& env, const PolicyNetwork& net, const Matrix& nu0,
                                    const std::vector<std::vector<std::size_t>>& noise_paths);
// DP stage-n objective; later stages play the frozen networks future[m - n - 1].
LossGrad dp_stage_loss_gradient(const Environment& env, const PolicyNetwork& net, int stage,
                                std::span<const PolicyNetwork> future, const Matrix& nu,
                                const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec = Exec::parallel);

// Training batches, exposed for tests and benchmarks.
Matrix sample_da_batch(Rng& rng, std::size_t num_states, int batch);
Matrix sample_dp_batch(Rng& rng, std::size_t num_states, int batch);
std::vector<std::vector<std::size_t>> sample_noise_paths(const Environment& env, const Rng& rng, int batch);

}  // namespace mfos
