#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pointssl {

// Raised for malformed configuration or command-line usage; the CLI maps it
// to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat `key = value` configuration, one entry per line. `#` starts a comment;
// blank lines are ignored; duplicate keys are rejected.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// Rejects any key outside `known` (unknown keys are configuration errors).
void require_known_keys(const ConfigMap& cfg, const std::set<std::string>& known);

// Canonical serialization: sorted `key = value` lines.
std::string config_echo(const ConfigMap& cfg);

bool has_key(const ConfigMap& cfg, const std::string& key);
std::string get_string(const ConfigMap& cfg, const std::string& key, const std::string& fallback);
double get_double(const ConfigMap& cfg, const std::string& key, double fallback);
std::int64_t get_int(const ConfigMap& cfg, const std::string& key, std::int64_t fallback);
bool get_bool(const ConfigMap& cfg, const std::string& key, bool fallback);
std::vector<int> get_int_list(const ConfigMap& cfg, const std::string& key, const std::vector<int>& fallback);
std::vector<std::string> get_string_list(const ConfigMap& cfg, const std::string& key,
                                         const std::vector<std::string>& fallback);

}  // namespace pointssl
