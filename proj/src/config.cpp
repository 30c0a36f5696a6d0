#include "pointssl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pointssl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.count(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg[key] = value;
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

void require_known_keys(const ConfigMap& cfg, const std::set<std::string>& known) {
  for (const auto& [key, value] : cfg) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string config_echo(const ConfigMap& cfg) {
  std::string out;
  for (const auto& [key, value] : cfg) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

bool has_key(const ConfigMap& cfg, const std::string& key) { return cfg.count(key) > 0; }

std::string get_string(const ConfigMap& cfg, const std::string& key, const std::string& fallback) {
  const auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

double get_double(const ConfigMap& cfg, const std::string& key, double fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

std::int64_t get_int(const ConfigMap& cfg, const std::string& key, std::int64_t fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::int64_t v = 0;
  const auto* first = it->second.data();
  const auto* last = first + it->second.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
  return v;
}

bool get_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  const std::string& v = it->second;
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected on/off, got '" + v + "'");
}

std::vector<std::string> get_string_list(const ConfigMap& cfg, const std::string& key,
                                         const std::vector<std::string>& fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(it->second);
  while (std::getline(in, item, ',')) {
    const auto begin = item.find_first_not_of(" \t");
    const auto end = item.find_last_not_of(" \t");
    if (begin == std::string::npos) throw ConfigError("config key '" + key + "': empty list item");
    out.push_back(item.substr(begin, end - begin + 1));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::vector<int> get_int_list(const ConfigMap& cfg, const std::string& key, const std::vector<int>& fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::vector<int> out;
  for (const std::string& item : get_string_list(cfg, key, {})) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size())
      throw ConfigError("config key '" + key + "': expected integers, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace pointssl
