#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mfos {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string default_value;  // empty: unset
  std::string doc;
};

// Every key a run configuration may carry, in manifest order.
const std::vector<ConfigKey>& config_keys();

// Flat key = value configuration. Layers: built-in defaults, then config
// files, then explicit overrides; later layers win. Unknown keys, malformed
// lines and repeated keys within one file are errors.
class RunConfig {
 public:
  void load_file(const std::string& path);
  void load_text(std::string_view text, std::string_view source = "<text>");
  void set(std::string_view key, std::string_view value);

  bool is_set(std::string_view key) const;  // set by a file or override
  std::string get(std::string_view key) const;  // resolved value, default included
  bool has_value(std::string_view key) const { return !get(key).empty(); }

  int get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;  // comma separated
  std::vector<int> get_ints(std::string_view key) const;

  // Fully resolved configuration as a loadable config file.
  std::string manifest() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace mfos
