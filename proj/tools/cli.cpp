#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "mfos/config.hpp"
#include "mfos/environments.hpp"
#include "mfos/exec.hpp"
#include "mfos/mean_field.hpp"
#include "mfos/n_agent.hpp"
#include "mfos/network.hpp"
#include "mfos/oracles.hpp"
#include "mfos/report.hpp"
#include "mfos/trainers.hpp"

namespace fs = std::filesystem;

namespace mfos::cli {
namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
  std::vector<std::string> commands;  // empty: every command
};

const std::vector<Flag>& flags() {
  static const std::vector<Flag> table = {
      {"--env", "env", "environment name", {}},
      {"--algo", "algorithm", "da | dp", {"train", "sweep"}},
      {"--class", "stopping_class", "async | sync", {"train", "sweep", "oracle"}},
      {"--seed", "seed", "master seed", {"train", "sweep", "simulate", "converge"}},
      {"--n-iter", "n_iter", "training iterations (per stage for dp)", {"train", "sweep"}},
      {"--batch", "batch", "batch size", {"train", "sweep"}},
      {"--lr", "lr", "learning rate", {"train"}},
      {"--weight-decay", "weight_decay", "AdamW weight decay", {"train", "sweep"}},
      {"--eval-every", "eval_every", "iterations between evaluations", {"train", "sweep"}},
      {"--mc-paths", "mc_paths", "common-noise paths for evaluation", {"train", "sweep", "eval"}},
      {"--blocks", "blocks", "residual blocks (0 = default)", {"train", "sweep"}},
      {"--width", "width", "hidden width (0 = default)", {"train", "sweep"}},
      {"--checkpoint", "checkpoint", "checkpoint file or dp stage directory", {"eval", "simulate", "converge"}},
      {"--policy", "policy", "never | all | constant:<p> (instead of a checkpoint)", {"eval", "simulate", "converge"}},
      {"--levels", "levels", "grid levels M per coordinate", {"oracle"}},
      {"--agents", "agents", "number of agents", {"simulate"}},
      {"--Ns", "Ns", "comma-separated population sizes", {"converge"}},
      {"--reps", "reps", "replications per population size", {"converge"}},
      {"--lrs", "lrs", "comma-separated learning rates", {"sweep"}},
      {"--out", "out", "output directory", {}},
      {"--threads", "threads", "OpenMP threads (default: MFOS_THREADS, then hardware)", {}},
  };
  return table;
}

struct Context {
  RunConfig rc;
  std::string command;
  fs::path out_dir;
  std::ostream& out;
};

// --- config resolution ---

int resolve_threads(const RunConfig& rc) {
  int n = rc.get_int("threads");
  if (n < 0) throw ConfigError("threads must be non-negative");
  if (n == 0) {
    if (const char* env = std::getenv("MFOS_THREADS"); env && *env) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (*end != '\0' || v < 1 || v > 4096) throw ConfigError("MFOS_THREADS must be a positive integer, got '" + std::string(env) + "'");
      n = static_cast<int>(v);
    }
  }
  return n;
}

Environment resolve_env(const RunConfig& rc) {
  const std::string name = rc.get("env");
  if (name.empty()) {
    std::string valid;
    for (const auto& n : environment_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("no environment given (valid: " + valid + ")");
  }
  try {
    return make_environment(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig train_config(const RunConfig& rc) {
  TrainConfig c;
  c.n_iter = rc.get_int("n_iter");
  c.batch_size = rc.get_int("batch");
  c.lr = rc.get_double("lr");
  c.weight_decay = rc.get_double("weight_decay");
  c.seed = rc.get_u64("seed");
  c.eval_every = rc.get_int("eval_every");
  const int paths = rc.get_int("mc_paths");
  if (paths < 1) throw ConfigError("mc_paths must be at least 1");
  c.mc_paths = static_cast<std::size_t>(paths);
  c.blocks = rc.get_int("blocks");
  c.width = rc.get_int("width");
  if (c.blocks < 0 || c.width < 0) throw ConfigError("blocks and width must be non-negative");
  try {
    c.stopping_class = parse_stopping_class(rc.get("stopping_class"));
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Algorithm resolve_algorithm(const RunConfig& rc) {
  try {
    return parse_algorithm(rc.get("algorithm"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// --- output helpers ---

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string short_fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void write_file(const fs::path& p, const std::string& content) { report::write_text(p.string(), content); }

template <class Fn>
void write_csv(const fs::path& p, Fn&& fn) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  fn(f);
  if (!f) throw std::runtime_error("error while writing " + p.string());
}

std::optional<double> reference_value(const Environment& env) {
  if (env.name == "ex1") return closed_form_ex1(env.horizon);
  if (env.mean_field_free()) return single_agent_dpp(env).value_at_mu0;
  return std::nullopt;
}

int evolution_every(const Environment& env) { return env.space.is_grid() && env.horizon >= 20 ? 5 : 1; }

Trajectory eval_trajectory(const Environment& env, const Policy& policy, std::span<const double> mu0) {
  Rng rng = Rng(kEvalSeed).split(0);
  return rollout(env, policy, initial_extend(mu0), rng);
}

void write_evolution(const fs::path& dir, const std::string& stem, const Environment& env, const Trajectory& traj,
                     const std::string& title) {
  write_csv(dir / (stem + ".csv"), [&](std::ostream& o) { write_trajectory_csv(o, traj, env.space); });
  write_file(dir / (stem + ".svg"), report::trajectory_figure(traj, env.space, evolution_every(env), title));
}

std::string loss_chart(const TrainReport& r, const std::string& title, std::optional<double> reference) {
  report::Series train{"train loss", {}, {}};
  for (std::size_t i = 0; i < r.train_loss.size(); ++i) {
    train.x.push_back(static_cast<double>(i + 1));
    train.y.push_back(r.train_loss[i]);
  }
  report::Series test{"test loss", {}, {}};
  for (const auto& e : r.evals) {
    test.x.push_back(e.iteration);
    test.y.push_back(e.test_loss);
  }
  report::ChartOptions o;
  o.title = title;
  o.x_label = "iteration";
  o.y_label = "loss";
  o.reference = reference;
  if (reference) o.reference_label = "reference " + short_fmt(*reference);
  return report::line_chart({train, test}, o);
}

// --- policies from checkpoints ---

std::vector<fs::path> stage_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("stage-", 0) == 0 && e.path().extension() == ".ckpt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void check_networks(const Environment& env, const std::vector<PolicyNetwork>& nets, const std::string& env_name,
                    const std::string& path) {
  if (env_name != env.name)
    throw ConfigError("checkpoint " + path + " was trained on '" + env_name + "', not '" + env.name + "'");
  for (const auto& n : nets)
    if (n.config().num_states != env.num_states()) throw ConfigError("checkpoint " + path + " has the wrong state count");
}

struct LoadedPolicy {
  Policy policy;
  std::string label;
};

// A checkpoint that does not parse is bad input, not a runtime failure.
Checkpoint read_checkpoint_file(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read checkpoint " + path + ": " + e.what());
  }
}

LoadedPolicy resolve_policy(const RunConfig& rc, const Environment& env) {
  const std::string ckpt = rc.get("checkpoint");
  const std::string policy_text = rc.get("policy");
  if (!ckpt.empty() && !policy_text.empty()) throw ConfigError("give either checkpoint or policy, not both");
  if (!ckpt.empty()) {
    const fs::path p(ckpt);
    if (!fs::exists(p)) throw ConfigError("checkpoint not found: " + ckpt);
    if (fs::is_directory(p)) {
      std::vector<PolicyNetwork> nets;
      for (const auto& f : stage_files(p)) {
        Checkpoint c = read_checkpoint_file(f.string());
        if (c.networks.size() != 1) throw ConfigError("stage checkpoint " + f.string() + " must hold one network");
        check_networks(env, c.networks, c.env_name, f.string());
        nets.push_back(std::move(c.networks.front()));
      }
      if (nets.size() != static_cast<std::size_t>(env.horizon))
        throw ConfigError("expected " + std::to_string(env.horizon) + " stage checkpoints in " + ckpt + ", found " +
                          std::to_string(nets.size()));
      return {dp_policy(std::move(nets)), "dp:" + ckpt};
    }
    Checkpoint c = read_checkpoint_file(ckpt);
    check_networks(env, c.networks, c.env_name, ckpt);
    if (c.networks.size() == 1 && c.algorithm == "da") return {c.networks.front().as_policy(), "da:" + ckpt};
    if (c.networks.size() == static_cast<std::size_t>(env.horizon))
      return {dp_policy(std::move(c.networks)), "dp:" + ckpt};
    throw ConfigError("checkpoint " + ckpt + " does not fit the horizon of " + env.name);
  }
  if (policy_text == "never") return {constant_policy({0.0}), policy_text};
  if (policy_text == "all") return {constant_policy({1.0}), policy_text};
  if (policy_text.rfind("constant:", 0) == 0) {
    char* end = nullptr;
    const std::string v = policy_text.substr(9);
    const double p = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || !(p >= 0.0 && p <= 1.0)) throw ConfigError("policy constant:<p> needs p in [0, 1]");
    return {constant_policy({p}), policy_text};
  }
  if (policy_text.empty()) throw ConfigError(rc.get("command") + " needs a checkpoint or a policy");
  throw ConfigError("unknown policy '" + policy_text + "' (valid: never, all, constant:<p>)");
}

// --- commands ---

int cmd_train(Context& ctx) {
  const Environment env = resolve_env(ctx.rc);
  const Algorithm algo = resolve_algorithm(ctx.rc);
  TrainConfig cfg = train_config(ctx.rc);
  const auto& mu0 = env.default_initial;
  const fs::path evo = ctx.out_dir / "evolution";
  fs::create_directories(evo);
  cfg.on_eval = [&](int stage, int iteration, const Policy& policy) {
    if (stage > 0) return;
    char stem[32];
    std::snprintf(stem, sizeof stem, "iter-%06d", iteration);
    write_evolution(evo, stem, env, eval_trajectory(env, policy, mu0),
                    env.name + " " + to_string(algo) + ", iteration " + std::to_string(iteration));
  };
  const auto reference = reference_value(env);
  std::vector<TrainReport> reports;
  Policy final_policy;
  if (algo == Algorithm::da) {
    DaResult r = train_da(env, cfg);
    save_checkpoint((ctx.out_dir / "checkpoint.ckpt").string(),
                    {{r.network}, {r.optimizer}, "da", env.name});
    final_policy = r.network.as_policy();
    reports.push_back(r.report);
    write_file(ctx.out_dir / "loss.svg", loss_chart(r.report, env.name + " DA", reference));
  } else {
    DpResult r = train_dp(env, cfg);
    const fs::path dir = ctx.out_dir / "checkpoints";
    fs::create_directories(dir);
    for (std::size_t n = 0; n < r.networks.size(); ++n) {
      char name[32];
      std::snprintf(name, sizeof name, "stage-%03zu.ckpt", n);
      save_checkpoint((dir / name).string(), {{r.networks[n]}, {r.optimizers[n]}, "dp", env.name});
    }
    final_policy = dp_policy(r.networks);
    reports = r.reports;
    write_file(ctx.out_dir / "loss.svg", loss_chart(r.reports.front(), env.name + " DP stage 0", reference));
    report::Series values{"final test loss", {}, {}};
    for (const auto& rep : r.reports) {
      values.x.push_back(rep.stage);
      values.y.push_back(rep.final_test_loss());
    }
    report::ChartOptions o;
    o.title = env.name + " DP value per stage";
    o.x_label = "stage n";
    o.y_label = "test loss";
    write_file(ctx.out_dir / "stage_values.svg", report::line_chart({values}, o));
  }
  write_csv(ctx.out_dir / "train_report.csv", [&](std::ostream& o) { write_train_report_csv(o, reports); });
  write_evolution(ctx.out_dir, "final_evolution", env, eval_trajectory(env, final_policy, mu0),
                  env.name + " " + to_string(algo) + ", final policy");
  const double final_loss = reports.front().final_test_loss();  // DP: stage 0
  ctx.out << "train " << env.name << " " << to_string(algo) << " " << ctx.rc.get("stopping_class")
          << ": final test loss " << fmt(final_loss) << "\n";
  return kOk;
}

int cmd_eval(Context& ctx) {
  const Environment env = resolve_env(ctx.rc);
  const LoadedPolicy lp = resolve_policy(ctx.rc, env);
  const int paths = ctx.rc.get_int("mc_paths");
  if (paths < 1) throw ConfigError("mc_paths must be at least 1");
  const std::size_t mc = env.has_common_noise() ? static_cast<std::size_t>(paths) : 1;
  const double value = evaluate(env, lp.policy, env.default_initial, mc);
  write_csv(ctx.out_dir / "eval.csv", [&](std::ostream& o) {
    o << "# mfos-eval v1\nenv,policy,mc_paths,value\n";
    o << report::csv_field(env.name) << "," << report::csv_field(lp.label) << "," << mc << "," << fmt(value) << "\n";
  });
  write_evolution(ctx.out_dir, "evolution", env, eval_trajectory(env, lp.policy, env.default_initial),
                  env.name + " " + lp.label);
  ctx.out << "eval " << env.name << " " << lp.label << ": J = " << fmt(value) << "\n";
  return kOk;
}

std::string rule_string(std::span<const double> rule) {
  std::string s = "(";
  for (std::size_t i = 0; i < rule.size(); ++i) s += (i ? "," : "") + short_fmt(rule[i]);
  return s + ")";
}

int cmd_oracle(Context& ctx) {
  const Environment env = resolve_env(ctx.rc);
  const std::size_t ns = env.num_states();
  if (env.name == "ex1") ctx.out << "closed form: " << fmt(closed_form_ex1(env.horizon)) << "\n";
  if (env.mean_field_free()) {
    const DppSolution d = single_agent_dpp(env);
    write_csv(ctx.out_dir / "oracle.csv", [&](std::ostream& o) {
      o << "# mfos-dpp v1\nn,state,value,stop\n";
      for (std::size_t n = 0; n < d.rules.size(); ++n)
        for (std::size_t x = 0; x < ns; ++x)
          o << n << "," << report::csv_field(env.space.label(x)) << "," << fmt(d.value[n][x]) << "," << d.rules[n][x]
            << "\n";
      o << "value," << fmt(d.value_at_mu0) << ",,\n";
    });
    ctx.out << "oracle " << env.name << " dpp: value " << fmt(d.value_at_mu0) << "\n";
    for (std::size_t n = 0; n < d.rules.size(); ++n) ctx.out << "  p_" << n << " = " << rule_string(d.rules[n]) << "\n";
    return kOk;
  }
  StoppingClass cls;
  try {
    cls = parse_stopping_class(ctx.rc.get("stopping_class"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const int levels = ctx.rc.get_int("levels");
  if (levels < 1) throw ConfigError("levels must be at least 1");
  if (env.has_common_noise()) throw ConfigError("no exhaustive oracle for common-noise environment " + env.name);
  const std::size_t dims = static_cast<std::size_t>(env.horizon) * (cls == StoppingClass::synchronous ? 1 : ns);
  const double points = std::pow(static_cast<double>(levels) + 1.0, static_cast<double>(dims));
  if (points > static_cast<double>(kMaxGridPoints)) {
    if (env.name == "ex1") return kOk;  // closed form already printed
    throw ConfigError("grid search over " + std::to_string(dims) + " coordinates with " + std::to_string(levels) +
                      " levels is too large; lower --levels");
  }
  const auto nu0 = initial_extend(env.default_initial);
  const GridSearchResult g = grid_search_policy(env, nu0, levels, cls);
  const GridSearchResult binary = grid_search_policy(env, nu0, 1, cls, {}, Exec::parallel, false);
  write_csv(ctx.out_dir / "oracle.csv", [&](std::ostream& o) { write_grid_search_csv(o, g, cls, env); });
  write_csv(ctx.out_dir / "oracle_binary.csv", [&](std::ostream& o) { write_grid_search_csv(o, binary, cls, env); });
  ctx.out << "oracle " << env.name << " grid M=" << levels << ": value " << fmt(g.value) << " at "
          << rule_string(g.point) << "; 0/1 rules: value " << fmt(binary.value) << "\n";
  return kOk;
}

int cmd_simulate(Context& ctx) {
  const Environment env = resolve_env(ctx.rc);
  const LoadedPolicy lp = resolve_policy(ctx.rc, env);
  const int agents = ctx.rc.get_int("agents");
  if (agents < 1) throw ConfigError("agents must be at least 1");
  Rng rng(ctx.rc.get_u64("seed"));
  const SimulationResult sim = simulate(env, lp.policy, static_cast<std::size_t>(agents), rng);
  const Trajectory mf = rollout(env, lp.policy, initial_extend(env.default_initial), sim.noise_path);
  const std::size_t ns = env.num_states();
  write_csv(ctx.out_dir / "simulation.csv", [&](std::ostream& o) {
    o << "# mfos-simulation v1\nn,state,empirical_stopped,empirical_alive,mean_field_stopped,mean_field_alive\n";
    for (std::size_t n = 0; n < sim.empirical_extended.size(); ++n) {
      const auto& e = sim.empirical_extended[n];
      const auto& m = mf.distributions[n].mass();
      for (std::size_t x = 0; x < ns; ++x)
        o << n << "," << report::csv_field(env.space.label(x)) << "," << fmt(e[x]) << "," << fmt(e[ns + x]) << ","
          << fmt(m[x]) << "," << fmt(m[ns + x]) << "\n";
    }
  });
  ctx.out << "simulate " << env.name << " N=" << agents << ": realized cost " << fmt(sim.realized_cost)
          << ", mean-field cost " << fmt(mf.total_cost()) << "\n";
  return kOk;
}

int cmd_converge(Context& ctx) {
  const Environment env = resolve_env(ctx.rc);
  const LoadedPolicy lp = resolve_policy(ctx.rc, env);
  std::vector<std::size_t> Ns;
  for (int n : ctx.rc.get_ints("Ns")) {
    if (n < 1) throw ConfigError("population sizes must be positive");
    Ns.push_back(static_cast<std::size_t>(n));
  }
  if (Ns.size() < 2) throw ConfigError("converge needs at least two population sizes");
  const int reps = ctx.rc.get_int("reps");
  if (reps < 1) throw ConfigError("reps must be at least 1");
  const StudyResult study = convergence_study(env, lp.policy, Ns, reps, Rng(ctx.rc.get_u64("seed")));
  write_csv(ctx.out_dir / "convergence.csv", [&](std::ostream& o) { write_study_csv(o, study); });
  report::Series l2{"mean L2 distance", {}, {}}, tv{"mean TV distance", {}, {}}, ref{"slope -1/2", {}, {}};
  for (const auto& s : study.summary) {
    l2.x.push_back(static_cast<double>(s.N));
    l2.y.push_back(s.mean_l2);
    tv.x.push_back(static_cast<double>(s.N));
    tv.y.push_back(s.mean_tv);
  }
  if (!study.summary.empty() && study.summary.front().mean_l2 > 0.0) {
    const double n0 = static_cast<double>(study.summary.front().N);
    for (const auto& s : study.summary) {
      ref.x.push_back(static_cast<double>(s.N));
      ref.y.push_back(study.summary.front().mean_l2 * std::sqrt(n0 / static_cast<double>(s.N)));
    }
  }
  report::ChartOptions o;
  o.title = env.name + ": empirical vs mean-field distribution";
  o.x_label = "N";
  o.y_label = "distance";
  o.log_x = o.log_y = true;
  write_file(ctx.out_dir / "convergence.svg", report::line_chart({l2, tv, ref}, o));
  ctx.out << "converge " << env.name << ": slope L2 " << fmt(study.slope_l2) << ", slope TV " << fmt(study.slope_tv)
          << "\n";
  return kOk;
}

int cmd_sweep(Context& ctx) {
  const Environment env = resolve_env(ctx.rc);
  const Algorithm algo = resolve_algorithm(ctx.rc);
  const TrainConfig cfg = train_config(ctx.rc);
  const std::vector<double> lrs = ctx.rc.get_doubles("lrs");
  if (lrs.empty()) throw ConfigError("sweep needs at least one learning rate");
  for (double lr : lrs)
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  const auto entries = lr_sweep(env, algo, lrs, cfg);
  const auto reference = reference_value(env);
  write_csv(ctx.out_dir / "sweep.csv", [&](std::ostream& o) {
    o << "# mfos-sweep v1\nlr,final_test_loss\n";
    for (const auto& e : entries) o << fmt(e.lr) << "," << fmt(e.final_test_loss) << "\n";
  });
  std::string summary;
  for (const auto& e : entries) {
    const std::string tag = "lr-" + short_fmt(e.lr);
    write_csv(ctx.out_dir / ("train_report-" + tag + ".csv"), [&](std::ostream& o) { write_train_report_csv(o, e.reports); });
    write_file(ctx.out_dir / ("loss-" + tag + ".svg"),
               loss_chart(e.reports.front(), env.name + " " + to_string(algo) + ", lr " + short_fmt(e.lr), reference));
    summary += " " + short_fmt(e.lr) + "->" + fmt(e.final_test_loss);
  }
  ctx.out << "sweep " << env.name << " " << to_string(algo) << ":" << summary << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field optimal stopping: training, evaluation, oracles and finite-population studies", "mfos"};
  app.require_subcommand(1);
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> config_files;
  std::vector<std::string> sets;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a stopping policy (da or dp)"},
      {"eval", "evaluate the social cost of a policy"},
      {"oracle", "exact or exhaustive reference values"},
      {"simulate", "simulate N agents playing a policy"},
      {"converge", "empirical vs mean-field distance over population sizes"},
      {"sweep", "learning-rate sweep"},
  };
  std::string chosen;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, n = name] { chosen = n; });
    sub->add_option("--config", config_files, "key = value config file (a manifest works too)");
    sub->add_option("--set", sets, "override as key=value");
    for (const auto& f : flags()) {
      if (!f.commands.empty() && std::find(f.commands.begin(), f.commands.end(), name) == f.commands.end()) continue;
      sub->add_option_function<std::string>(
          f.name, [&overrides, key = std::string(f.key)](const std::string& v) { overrides.emplace_back(key, v); },
          f.help);
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  fs::path out_dir;
  try {
    RunConfig rc;
    for (const auto& f : config_files) rc.load_file(f);
    for (const auto& [k, v] : overrides) rc.set(k, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      rc.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (rc.is_set("command") && rc.get("command") != chosen)
      throw ConfigError("config was written by '" + rc.get("command") + "', not '" + chosen + "'");
    rc.set("command", chosen);
    set_num_threads(resolve_threads(rc));
    out_dir = rc.get("out");
    if (out_dir.empty()) throw ConfigError("out must not be empty");
    fs::create_directories(out_dir);
    report::write_text((out_dir / "manifest.txt").string(), rc.manifest());

    Context ctx{std::move(rc), chosen, out_dir, out};
    if (chosen == "train") return cmd_train(ctx);
    if (chosen == "eval") return cmd_eval(ctx);
    if (chosen == "oracle") return cmd_oracle(ctx);
    if (chosen == "simulate") return cmd_simulate(ctx);
    if (chosen == "converge") return cmd_converge(ctx);
    if (chosen == "sweep") return cmd_sweep(ctx);
    throw ConfigError("unknown command " + chosen);
  } catch (const ConfigError& e) {
    err << "mfos " << chosen << ": config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const TrainingDiverged& e) {
    err << "mfos " << chosen << ": diverged (stage " << e.stage() << ", iteration " << e.iteration() << "): " << e.what()
        << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "mfos " << chosen << ": error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace mfos::cli
