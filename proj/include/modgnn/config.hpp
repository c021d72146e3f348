#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace modgnn {

// Raised for malformed files, unknown keys and bad values; the CLI maps it
// to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat "section.key = value" text config.  Every key a command reads is
// marked consumed; leftovers are reported as unknown (no silent typos).
// The resolved map records the effective value of every key including
// defaults, for embedding into output artifacts.
class FlatConfig {
 public:
  FlatConfig() = default;

  static FlatConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str(), path);
  }

  static FlatConfig from_string(const std::string& text,
                                const std::string& origin = "<string>") {
    FlatConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      if (line[first] == '#' || line[first] == ';') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": empty key");
      }
      c.values_[key] = value;
    }
    return c;
  }

  // command-line overrides; counts as present and provided
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) {
    const std::string v = raw(key, def);
    resolved_[key] = v;
    return v;
  }

  double get_double(const std::string& key, double def) {
    const std::string v = raw(key, format(def));
    resolved_[key] = v;
    return parse_double(key, v);
  }

  int get_int(const std::string& key, int def) {
    const std::string v = raw(key, std::to_string(def));
    resolved_[key] = v;
    return static_cast<int>(parse_long(key, v));
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    const std::string v = raw(key, std::to_string(def));
    resolved_[key] = v;
    try {
      return std::stoull(v);
    } catch (...) {
      throw ConfigError("config key " + key + ": expected integer, got '" +
                        v + "'");
    }
  }

  bool get_bool(const std::string& key, bool def) {
    const std::string v = raw(key, def ? "true" : "false");
    resolved_[key] = v;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": expected true/false, got '" +
                      v + "'");
  }

  std::vector<int> get_int_list(const std::string& key,
                                const std::string& def) {
    std::vector<int> out;
    for (const std::string& s : get_string_list(key, def))
      out.push_back(static_cast<int>(parse_long(key, s)));
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::string& def) {
    const std::string v = raw(key, def);
    resolved_[key] = v;
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  void reject_unknown_keys() const {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) unknown.push_back(k);
    if (!unknown.empty()) {
      std::string msg = "unknown config key";
      if (unknown.size() > 1) msg += "s";
      msg += ":";
      for (const auto& k : unknown) msg += " " + k;
      throw ConfigError(msg);
    }
  }

  // every effective key=value, defaults included, sorted by key
  nlohmann::json resolved_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : resolved_) j[k] = v;
    return j;
  }

  std::string resolved_text() const {
    std::string out;
    for (const auto& [k, v] : resolved_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static std::string format(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  }

  std::string raw(const std::string& key, const std::string& def) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double parse_double(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (...) {
      throw ConfigError("config key " + key + ": expected number, got '" + v +
                        "'");
    }
  }

  long parse_long(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const long x = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (...) {
      throw ConfigError("config key " + key + ": expected integer, got '" + v +
                        "'");
    }
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
  std::map<std::string, std::string> resolved_;
};

}  // namespace modgnn
