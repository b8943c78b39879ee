// Serial reference vs OpenMP kernel for the hot loops. Run with
// OMP_NUM_THREADS to vary the thread count.
#include <benchmark/benchmark.h>

#include "mfos/n_agent.hpp"
#include "mfos/oracles.hpp"
#include "mfos/trainers.hpp"

using namespace mfos;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& state) { state.SetLabel(state.range(0) ? "parallel" : "serial"); }

// Batch gradient of the DA loss: one tape for the whole batch vs one tape per sample.
void BM_DaGradient(benchmark::State& state) {
  const auto env = make_environment("ex5");
  TrainConfig cfg;
  cfg.width = 64;
  cfg.blocks = 2;
  const PolicyNetwork net(network_config_for(env, cfg, true), 1);
  Rng rng(2);
  const Matrix nu = sample_da_batch(rng, env.num_states(), 32);
  const auto noise = sample_noise_paths(env, rng, 32);
  for (auto _ : state) {
    const auto g = state.range(0) ? da_loss_gradient(env, net, nu, noise, Exec::parallel)
                                  : da_loss_gradient_reference(env, net, nu, noise);
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetLabel(state.range(0) ? "batched parallel" : "per-sample serial");
}
BENCHMARK(BM_DaGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Monte Carlo social cost over common-noise paths.
void BM_SocialCostMc(benchmark::State& state) {
  const auto env = make_environment("ex6-M");
  const auto nu0 = initial_extend(env.default_initial);
  const auto policy = constant_policy({0.05});
  for (auto _ : state) benchmark::DoNotOptimize(social_cost(env, policy, nu0, Rng(3), 64, 0, exec_of(state)));
  label(state);
}
BENCHMARK(BM_SocialCostMc)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GridSearch(benchmark::State& state) {
  const auto env = make_environment("ex3");
  const auto nu0 = initial_extend(env.default_initial);
  for (auto _ : state)
    benchmark::DoNotOptimize(grid_search_policy(env, nu0, 20, StoppingClass::synchronous, {}, exec_of(state)).value);
  label(state);
}
BENCHMARK(BM_GridSearch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ConvergenceStudy(benchmark::State& state) {
  const auto env = make_environment("ex3");
  const std::vector<std::size_t> Ns{100, 1000, 10000};
  for (auto _ : state)
    benchmark::DoNotOptimize(convergence_study(env, constant_policy({0.2}), Ns, 4, Rng(5), exec_of(state)).slope_l2);
  label(state);
}
BENCHMARK(BM_ConvergenceStudy)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
