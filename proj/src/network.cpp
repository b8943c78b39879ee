#include "mfos/network.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mfos {

std::string to_string(StoppingClass c) { return c == StoppingClass::asynchronous ? "async" : "sync"; }

StoppingClass parse_stopping_class(std::string_view text) {
  if (text == "async" || text == "asynchronous") return StoppingClass::asynchronous;
  if (text == "sync" || text == "synchronous") return StoppingClass::synchronous;
  throw std::invalid_argument("unknown stopping class '" + std::string(text) + "' (expected async or sync)");
}

NetworkConfig default_network_config(const Environment& env, StoppingClass cls, bool time_conditioned) {
  NetworkConfig cfg;
  cfg.stopping_class = cls;
  cfg.time_conditioned = time_conditioned;
  cfg.num_states = env.num_states();
  if (env.space.is_grid()) {
    cfg.blocks = 5;
    cfg.width = 256;
  }
  return cfg;
}

std::size_t parameter_count(const NetworkConfig& cfg) {
  const std::size_t x = cfg.num_states;
  const std::size_t d = static_cast<std::size_t>(cfg.width);
  const std::size_t e = static_cast<std::size_t>(cfg.state_embed_dim());
  const std::size_t k = static_cast<std::size_t>(cfg.blocks);
  const std::size_t te = static_cast<std::size_t>(cfg.time_embed_dim);
  std::size_t count = 2 * x * d + d;
  if (cfg.stopping_class == StoppingClass::asynchronous) count += x * e + d * e;
  count += 4 * k * (d * d + d);
  if (cfg.time_conditioned) count += te * d + d + d * d + d;
  count += 2 * d;
  count += 2 * (d * d + d) + d + 1;
  return count;
}

namespace {

void validate(const NetworkConfig& cfg) {
  if (cfg.num_states == 0) throw std::invalid_argument("network: num_states must be positive");
  if (cfg.blocks < 0 || cfg.width <= 0) throw std::invalid_argument("network: invalid blocks/width");
  if (cfg.groups <= 0 || cfg.width % cfg.groups != 0)
    throw std::invalid_argument("network: width must be divisible by the group count");
  if (cfg.time_embed_dim <= 0 || cfg.time_embed_dim % 2 != 0)
    throw std::invalid_argument("network: time embedding size must be positive and even");
}

struct Layout {
  // Indices into the binding, in layout order.
  std::size_t state_embedding = 0, in_state = 0, in_dist = 0, in_bias = 0;
  std::vector<std::size_t> block;  // 8 per block: w1 b1 ... w4 b4
  std::size_t t_w1 = 0, t_b1 = 0, t_w2 = 0, t_b2 = 0;
  std::size_t norm_gain = 0, norm_bias = 0;
  std::size_t o_w1 = 0, o_b1 = 0, o_w2 = 0, o_b2 = 0, o_w3 = 0, o_b3 = 0;
};

Layout layout_of(const NetworkConfig& cfg) {
  Layout l;
  std::size_t i = 0;
  if (cfg.stopping_class == StoppingClass::asynchronous) {
    l.state_embedding = i++;
    l.in_state = i++;
  }
  l.in_dist = i++;
  l.in_bias = i++;
  for (int b = 0; b < cfg.blocks; ++b)
    for (int j = 0; j < 8; ++j) l.block.push_back(i++);
  if (cfg.time_conditioned) {
    l.t_w1 = i++;
    l.t_b1 = i++;
    l.t_w2 = i++;
    l.t_b2 = i++;
  }
  l.norm_gain = i++;
  l.norm_bias = i++;
  l.o_w1 = i++;
  l.o_b1 = i++;
  l.o_w2 = i++;
  l.o_b2 = i++;
  l.o_w3 = i++;
  l.o_b3 = i++;
  return l;
}

}  // namespace

PolicyNetwork::PolicyNetwork(NetworkConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg_);
  build_layout();
  initialize(seed);
}

PolicyNetwork::PolicyNetwork(NetworkConfig cfg, ParameterStore params) : cfg_(cfg) {
  validate(cfg_);
  build_layout();
  if (params.num_tensors() != params_.num_tensors())
    throw std::invalid_argument("network: parameter store does not match the configuration");
  for (std::size_t i = 0; i < params_.num_tensors(); ++i) {
    const auto& a = params_.info(i);
    const auto& b = params.info(i);
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols)
      throw std::invalid_argument("network: tensor '" + b.name + "' does not match the configuration");
  }
  if (!params.all_finite()) throw std::invalid_argument("network: non-finite parameters");
  std::copy(params.flat().begin(), params.flat().end(), params_.flat().begin());
}

void PolicyNetwork::build_layout() {
  const auto x = static_cast<Eigen::Index>(cfg_.num_states);
  const Eigen::Index d = cfg_.width;
  const Eigen::Index e = cfg_.state_embed_dim();
  if (cfg_.stopping_class == StoppingClass::asynchronous) {
    params_.add("state_embedding", x, e);
    params_.add("input.state.weight", d, e);
  }
  params_.add("input.dist.weight", d, 2 * x);
  params_.add("input.bias", 1, d);
  for (int b = 0; b < cfg_.blocks; ++b) {
    for (int j = 1; j <= 4; ++j) {
      const std::string prefix = "block" + std::to_string(b) + ".fc" + std::to_string(j);
      params_.add(prefix + ".weight", d, d);
      params_.add(prefix + ".bias", 1, d);
    }
  }
  if (cfg_.time_conditioned) {
    params_.add("time.fc1.weight", d, cfg_.time_embed_dim);
    params_.add("time.fc1.bias", 1, d);
    params_.add("time.fc2.weight", d, d);
    params_.add("time.fc2.bias", 1, d);
  }
  params_.add("norm.gain", 1, d);
  params_.add("norm.bias", 1, d);
  params_.add("out.fc1.weight", d, d);
  params_.add("out.fc1.bias", 1, d);
  params_.add("out.fc2.weight", d, d);
  params_.add("out.fc2.bias", 1, d);
  params_.add("out.fc3.weight", 1, d);
  params_.add("out.fc3.bias", 1, 1);
  params_.freeze();
  if (params_.num_scalars() != parameter_count(cfg_))
    throw std::logic_error("network: parameter layout disagrees with parameter_count");
}

void PolicyNetwork::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < params_.num_tensors(); ++i) {
    const auto& info = params_.info(i);
    auto t = params_.tensor(i);
    const bool is_bias = info.name.ends_with(".bias");
    if (info.name == "norm.gain") {
      t.setOnes();
    } else if (is_bias) {
      t.setZero();
    } else {
      // Embedding rows act on a one-hot input, i.e. fan-in 1.
      const double fan_in = info.name == "state_embedding" ? 1.0 : static_cast<double>(info.cols);
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
}

ad::Var PolicyNetwork::forward(ad::Tape& tape, const Binding& binding, int n, ad::Var nu) const {
  using namespace ad;
  if (binding.vars.size() != params_.num_tensors()) throw std::invalid_argument("network: binding mismatch");
  const Layout l = layout_of(cfg_);
  const auto& p = binding.vars;
  const Matrix& nuv = tape.value(nu);
  const auto ns = static_cast<Eigen::Index>(cfg_.num_states);
  if (nuv.cols() != 2 * ns) throw std::invalid_argument("network: input width must be 2|X|");
  const Eigen::Index batch = nuv.rows();
  const auto first = static_cast<std::int32_t>(tape.size());

  Var h;
  const Var dist = linear(tape, nu, p[l.in_dist], p[l.in_bias]);
  if (cfg_.stopping_class == StoppingClass::asynchronous) {
    // concat(embed(x), nu) @ W^T split into a per-state and a per-sample part.
    const Var state = matmul_nt(tape, p[l.state_embedding], p[l.in_state]);
    std::vector<std::int32_t> xs(static_cast<std::size_t>(batch * ns));
    std::vector<std::int32_t> bs(xs.size());
    for (Eigen::Index r = 0; r < batch * ns; ++r) {
      xs[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(r % ns);
      bs[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(r / ns);
    }
    h = add(tape, gather_rows(tape, state, std::move(xs)), gather_rows(tape, dist, std::move(bs)));
  } else {
    h = dist;
  }
  tape.set_label(h, "input");
  const Eigen::Index rows = tape.value(h).rows();

  for (int b = 0; b < cfg_.blocks; ++b) {
    const std::size_t o = static_cast<std::size_t>(b) * 8;
    Var u = silu(tape, linear(tape, h, p[l.block[o]], p[l.block[o + 1]]));
    u = silu(tape, linear(tape, u, p[l.block[o + 2]], p[l.block[o + 3]]));
    u = silu(tape, linear(tape, u, p[l.block[o + 4]], p[l.block[o + 5]]));
    u = linear(tape, u, p[l.block[o + 6]], p[l.block[o + 7]]);
    h = add(tape, h, u);
    tape.set_label(h, "block" + std::to_string(b));
  }

  if (cfg_.time_conditioned) {
    const Var e = tape.constant(sinusoidal_embedding(static_cast<double>(n), cfg_.time_embed_dim));
    Var t = silu(tape, linear(tape, e, p[l.t_w1], p[l.t_b1]));
    t = linear(tape, t, p[l.t_w2], p[l.t_b2]);
    tape.set_label(t, "time");
    h = add(tape, h, gather_rows(tape, t, std::vector<std::int32_t>(static_cast<std::size_t>(rows), 0)));
  }

  Var y = group_norm(tape, h, p[l.norm_gain], p[l.norm_bias], cfg_.groups);
  tape.set_label(y, "group_norm");
  y = silu(tape, linear(tape, y, p[l.o_w1], p[l.o_b1]));
  y = silu(tape, linear(tape, y, p[l.o_w2], p[l.o_b2]));
  y = linear(tape, y, p[l.o_w3], p[l.o_b3]);
  tape.set_label(y, "output");
  Var prob = sigmoid(tape, y);

  if (!tape.value(prob).allFinite()) {
    const std::int32_t bad = tape.first_non_finite(first, prob.id);
    std::string where = "unknown layer";
    for (std::int32_t i = bad; i >= first && i <= prob.id; ++i) {
      if (!tape.label(Var{i}).empty()) {
        where = tape.label(Var{i});
        break;
      }
    }
    throw std::domain_error("network: non-finite activation at layer '" + where + "' (time " + std::to_string(n) + ")");
  }

  if (cfg_.stopping_class == StoppingClass::asynchronous) return reshape(tape, prob, batch, ns);
  return repeat_cols(tape, prob, ns);
}

Matrix PolicyNetwork::evaluate_batch(int n, const Matrix& nu) const {
  ad::Tape tape;
  const Binding b = bind(params_, tape, false);
  const ad::Var in = tape.constant(nu);
  return tape.value(forward(tape, b, n, in));
}

std::vector<double> PolicyNetwork::evaluate(int n, const ExtendedDistribution& nu) const {
  if (nu.num_states() != cfg_.num_states) throw std::invalid_argument("network: distribution has the wrong size");
  Matrix in(1, static_cast<Eigen::Index>(2 * cfg_.num_states));
  const auto mass = nu.mass();
  std::copy(mass.begin(), mass.end(), in.data());
  const Matrix out = evaluate_batch(n, in);
  if (cfg_.stopping_class == StoppingClass::synchronous) return {out(0, 0)};
  return {out.data(), out.data() + out.size()};
}

Policy PolicyNetwork::as_policy() const {
  return [net = *this](int n, const ExtendedDistribution& nu) { return net.evaluate(n, nu); };
}

Policy dp_policy(std::vector<PolicyNetwork> nets) {
  return [nets = std::move(nets)](int n, const ExtendedDistribution& nu) {
    if (n < 0 || static_cast<std::size_t>(n) >= nets.size())
      throw std::out_of_range("dp_policy: no network for time " + std::to_string(n));
    return nets[static_cast<std::size_t>(n)].evaluate(n, nu);
  };
}

namespace {

constexpr const char* kMagic = "mfos-checkpoint";
constexpr int kVersion = 1;

void write_doubles(std::ostream& out, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << encode_double(v[i]);
  out << '\n';
}

std::vector<double> read_doubles(std::istream& in, std::size_t count) {
  std::vector<double> v(count);
  std::string tok;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated value list");
    v[i] = decode_double(tok);
  }
  return v;
}

void expect(std::istream& in, const std::string& word) {
  std::string tok;
  if (!(in >> tok) || tok != word) throw std::runtime_error("checkpoint: expected '" + word + "', found '" + tok + "'");
}

template <class T>
T read_value(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw std::runtime_error(std::string("checkpoint: cannot read ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "algorithm " << (ckpt.algorithm.empty() ? "-" : ckpt.algorithm) << '\n';
  out << "env " << (ckpt.env_name.empty() ? "-" : ckpt.env_name) << '\n';
  out << "networks " << ckpt.networks.size() << '\n';
  for (std::size_t k = 0; k < ckpt.networks.size(); ++k) {
    const auto& net = ckpt.networks[k];
    const auto& c = net.config();
    out << "network " << k << " class " << to_string(c.stopping_class) << " time_conditioned "
        << (c.time_conditioned ? 1 : 0) << " states " << c.num_states << " blocks " << c.blocks << " width "
        << c.width << " embed " << c.embed_dim << " time_embed " << c.time_embed_dim << " groups " << c.groups
        << '\n';
    const auto& ps = net.parameters();
    out << "tensors " << ps.num_tensors() << '\n';
    for (std::size_t i = 0; i < ps.num_tensors(); ++i) {
      const auto& info = ps.info(i);
      out << "tensor " << info.name << ' ' << info.rows << ' ' << info.cols << '\n';
      write_doubles(out, ps.flat().subspan(info.offset, static_cast<std::size_t>(info.rows * info.cols)));
    }
    const bool has_opt = k < ckpt.optimizers.size() && ckpt.optimizers[k].has_value();
    if (has_opt) {
      const auto& st = *ckpt.optimizers[k];
      out << "optimizer " << st.step << ' ' << st.m.size() << '\n';
      write_doubles(out, st.m);
      write_doubles(out, st.v);
    } else {
      out << "optimizer none\n";
    }
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  expect(in, kMagic);
  const int version = read_value<int>(in, "version");
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  expect(in, "algorithm");
  ckpt.algorithm = read_value<std::string>(in, "algorithm");
  if (ckpt.algorithm == "-") ckpt.algorithm.clear();
  expect(in, "env");
  ckpt.env_name = read_value<std::string>(in, "env");
  if (ckpt.env_name == "-") ckpt.env_name.clear();
  expect(in, "networks");
  const auto count = read_value<std::size_t>(in, "network count");
  for (std::size_t k = 0; k < count; ++k) {
    NetworkConfig c;
    expect(in, "network");
    if (read_value<std::size_t>(in, "network index") != k) throw std::runtime_error("checkpoint: networks out of order");
    expect(in, "class");
    c.stopping_class = parse_stopping_class(read_value<std::string>(in, "class"));
    expect(in, "time_conditioned");
    c.time_conditioned = read_value<int>(in, "time flag") != 0;
    expect(in, "states");
    c.num_states = read_value<std::size_t>(in, "states");
    expect(in, "blocks");
    c.blocks = read_value<int>(in, "blocks");
    expect(in, "width");
    c.width = read_value<int>(in, "width");
    expect(in, "embed");
    c.embed_dim = read_value<int>(in, "embed");
    expect(in, "time_embed");
    c.time_embed_dim = read_value<int>(in, "time_embed");
    expect(in, "groups");
    c.groups = read_value<int>(in, "groups");

    ParameterStore store;
    expect(in, "tensors");
    const auto nt = read_value<std::size_t>(in, "tensor count");
    std::vector<std::vector<double>> values;
    for (std::size_t i = 0; i < nt; ++i) {
      expect(in, "tensor");
      const auto name = read_value<std::string>(in, "tensor name");
      const auto rows = read_value<Eigen::Index>(in, "rows");
      const auto cols = read_value<Eigen::Index>(in, "cols");
      store.add(name, rows, cols);
      values.push_back(read_doubles(in, static_cast<std::size_t>(rows * cols)));
    }
    store.freeze();
    for (std::size_t i = 0; i < nt; ++i)
      std::copy(values[i].begin(), values[i].end(), store.flat().begin() + static_cast<std::ptrdiff_t>(store.info(i).offset));
    ckpt.networks.emplace_back(c, std::move(store));

    expect(in, "optimizer");
    const auto tag = read_value<std::string>(in, "optimizer");
    if (tag == "none") {
      ckpt.optimizers.emplace_back(std::nullopt);
    } else {
      AdamWState st;
      st.step = std::stoll(tag);
      const auto size = read_value<std::size_t>(in, "optimizer size");
      st.m = read_doubles(in, size);
      st.v = read_doubles(in, size);
      ckpt.optimizers.emplace_back(std::move(st));
    }
  }
  expect(in, "end");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  write_checkpoint(out, ckpt);
  if (!out) throw std::runtime_error("error while writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace mfos
