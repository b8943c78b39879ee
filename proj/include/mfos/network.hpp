#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfos/autodiff.hpp"
#include "mfos/core.hpp"
#include "mfos/environments.hpp"
#include "mfos/mean_field.hpp"
#include "mfos/parameters.hpp"

namespace mfos {

enum class StoppingClass { asynchronous, synchronous };

std::string to_string(StoppingClass c);
// Accepts "async"/"asynchronous" and "sync"/"synchronous".
StoppingClass parse_stopping_class(std::string_view text);

struct NetworkConfig {
  StoppingClass stopping_class = StoppingClass::asynchronous;
  bool time_conditioned = true;
  std::size_t num_states = 1;
  int blocks = 3;          // k
  int width = 128;         // D
  int embed_dim = 0;       // state embedding size E; 0 means E = D
  int time_embed_dim = 32;
  int groups = 8;

  int state_embed_dim() const { return embed_dim > 0 ? embed_dim : width; }
  bool operator==(const NetworkConfig&) const = default;
};

// k = 3, D = 128 on 1D spaces and k = 5, D = 256 on grids.
NetworkConfig default_network_config(const Environment& env, StoppingClass cls, bool time_conditioned);

// Closed form of the parameter count:
//   input     async: |X|E + DE + 2|X|D + D     sync: 2|X|D + D
//   blocks    4k(D^2 + D)
//   time      32D + D + D^2 + D (time-conditioned only)
//   norm      2D
//   output    2(D^2 + D) + D + 1
std::size_t parameter_count(const NetworkConfig& cfg);

// Residual-MLP stopping policy. Asynchronous nets read (x, nu[, n]) and give
// one probability per state; synchronous nets read (nu[, n]) and give one
// probability shared by all states.
class PolicyNetwork {
 public:
  PolicyNetwork(NetworkConfig cfg, std::uint64_t seed);
  PolicyNetwork(NetworkConfig cfg, ParameterStore params);

  const NetworkConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  // nu: B x 2|X| on the tape. Returns B x |X| probabilities (a synchronous
  // net repeats its value across the row).
  ad::Var forward(ad::Tape& tape, const Binding& binding, int n, ad::Var nu) const;

  Matrix evaluate_batch(int n, const Matrix& nu) const;
  // Raw policy output: |X| values (async) or a single value (sync).
  std::vector<double> evaluate(int n, const ExtendedDistribution& nu) const;

  Policy as_policy() const;

 private:
  void build_layout();
  void initialize(std::uint64_t seed);

  NetworkConfig cfg_;
  ParameterStore params_;
};

// Policy from per-stage DP networks (index n plays at time n < T).
Policy dp_policy(std::vector<PolicyNetwork> nets);

// Plain-text checkpoint holding the network configuration, its parameters
// and optionally the optimizer state; doubles are written as hexfloats so a
// save/load cycle is bitwise exact.
struct Checkpoint {
  std::vector<PolicyNetwork> networks;  // one (DA) or T (DP, index = stage)
  std::vector<std::optional<AdamWState>> optimizers;
  std::string algorithm;                // "da" or "dp"
  std::string env_name;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace mfos
