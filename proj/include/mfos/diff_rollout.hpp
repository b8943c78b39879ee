#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mfos/autodiff.hpp"
#include "mfos/environments.hpp"
#include "mfos/exec.hpp"

namespace mfos {

// The tape nodes below keep a reference to env, which must outlive the tape.

// Batched mean-field step on the tape. nu is B x 2|X| (stopped | alive),
// h is B x |X|, noise has B entries (or is empty without common noise).
ad::Var mf_step_batch(ad::Tape& tape, const Environment& env, int n, ad::Var nu, ad::Var h,
                      std::span<const NoiseValue> noise, Exec exec = Exec::parallel);

// B x 1 column of sum_x nu(x,1) Phi(x, mu) h(x).
ad::Var step_cost_batch(ad::Tape& tape, const Environment& env, ad::Var nu, ad::Var h, Exec exec = Exec::parallel);

// B x 1 column of g(mu).
ad::Var terminal_cost_batch(ad::Tape& tape, const Environment& env, ad::Var nu, Exec exec = Exec::parallel);

// Stopping probabilities (B x |X|) at time n for the batch nu.
using TapePolicy = std::function<ad::Var(ad::Tape& tape, int n, ad::Var nu)>;

// Per-sample total cost from start_time to T (h_T = 1), plus the terminal
// cost when present. noise_paths holds one length-T path per batch row, or
// is empty for noise-free environments. Returns B x 1.
ad::Var rollout_costs(ad::Tape& tape, const Environment& env, const TapePolicy& policy, ad::Var nu0, int start_time,
                      const std::vector<std::vector<std::size_t>>& noise_paths, Exec exec = Exec::parallel);

// Batch mean of rollout_costs, 1 x 1.
ad::Var mean_rollout_cost(ad::Tape& tape, const Environment& env, const TapePolicy& policy, ad::Var nu0,
                          int start_time, const std::vector<std::vector<std::size_t>>& noise_paths,
                          Exec exec = Exec::parallel);

}  // namespace mfos
