#include "mfos/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mfos {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"command", "", "subcommand that wrote the manifest; must match when re-run"},
      {"env", "", "environment name"},
      {"algorithm", "da", "da | dp"},
      {"stopping_class", "async", "async | sync"},
      {"n_iter", "500", "training iterations (per stage for dp)"},
      {"batch", "128", "training batch size"},
      {"lr", "1e-4", "AdamW learning rate"},
      {"weight_decay", "0.01", "AdamW decoupled weight decay"},
      {"seed", "0", "master seed"},
      {"eval_every", "100", "iterations between test evaluations"},
      {"mc_paths", "32", "common-noise paths for evaluation"},
      {"blocks", "0", "residual blocks, 0 = environment default"},
      {"width", "0", "hidden width, 0 = environment default"},
      {"checkpoint", "", "checkpoint file (da) or stage directory (dp)"},
      {"policy", "", "eval/simulate without checkpoint: never | all | constant:<p>"},
      {"levels", "12", "grid search levels M per coordinate"},
      {"agents", "1000", "number of agents for simulate"},
      {"Ns", "10,100,1000,10000", "population sizes for converge"},
      {"reps", "10", "replications per population size"},
      {"lrs", "1e-2,1e-3,1e-4", "learning rates for sweep"},
      {"threads", "0", "OpenMP threads, 0 = MFOS_THREADS or hardware default"},
      {"out", "out", "output directory"},
  };
  return keys;
}

namespace {

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string known_list() {
  std::string out;
  for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + k.name;
  return out;
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto c = s.find(',');
    out.push_back(trim(s.substr(0, c)));
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

}  // namespace

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

void RunConfig::load_text(std::string_view text, std::string_view source) {
  std::set<std::string, std::less<>> seen;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (!seen.insert(std::string(key)).second) throw ConfigError(where + ": key '" + std::string(key) + "' repeated");
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + std::string(key) + "' (known: " + known_list() + ")");
  values_.insert_or_assign(std::string(key), std::string(value));
}

bool RunConfig::is_set(std::string_view key) const { return values_.find(key) != values_.end(); }

std::string RunConfig::get(std::string_view key) const {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
  const auto it = values_.find(key);
  return it != values_.end() ? it->second : k->default_value;
}

int RunConfig::get_int(std::string_view key) const { return parse_number<int>(key, get(key)); }

std::uint64_t RunConfig::get_u64(std::string_view key) const { return parse_number<std::uint64_t>(key, get(key)); }

double RunConfig::get_double(std::string_view key) const {
  const double v = parse_number<double>(key, get(key));
  if (!std::isfinite(v)) throw ConfigError("config key '" + std::string(key) + "' must be finite");
  return v;
}

bool RunConfig::get_bool(std::string_view key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false, got '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(std::string_view key) const {
  std::vector<double> out;
  const std::string v = get(key);
  if (v.empty()) return out;
  for (auto part : split_commas(v)) {
    const double d = parse_number<double>(key, part);
    if (!std::isfinite(d)) throw ConfigError("config key '" + std::string(key) + "' must be finite");
    out.push_back(d);
  }
  return out;
}

std::vector<int> RunConfig::get_ints(std::string_view key) const {
  std::vector<int> out;
  const std::string v = get(key);
  if (v.empty()) return out;
  for (auto part : split_commas(v)) out.push_back(parse_number<int>(key, part));
  return out;
}

std::string RunConfig::manifest() const {
  std::string out = "# mfos-manifest v1\n";
  for (const auto& k : config_keys()) {
    const std::string v = get(k.name);
    if (v.empty()) continue;
    out += k.name + " = " + v + "\n";
  }
  return out;
}

}  // namespace mfos
