#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "modgnn/tensor.hpp"

namespace modgnn {

constexpr int kCheckpointFormatVersion = 1;

struct ParamRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Self-describing parameter checkpoint.  `extra` carries the full model
// configuration (and resolved run config when saved by the CLI) so a
// checkpoint can be reloaded without outside context.  JSON doubles are
// emitted as shortest round-tripping decimals, so save/load is value-exact.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string model_variant;
  int K = 0;
  int L = 1;
  std::uint64_t seed = 0;
  nlohmann::json extra;
  std::vector<ParamRecord> params;
};

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format_version"] = c.format_version;
  j["model_variant"] = c.model_variant;
  j["K"] = c.K;
  j["L"] = c.L;
  j["seed"] = c.seed;
  if (!c.extra.is_null()) j["extra"] = c.extra;
  auto& params = j["params"] = nlohmann::json::array();
  for (const auto& p : c.params) {
    params.push_back({{"name", p.name}, {"shape", p.shape}, {"values", p.values}});
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  detail::require(c.format_version == kCheckpointFormatVersion,
                  "unsupported checkpoint format_version");
  c.model_variant = j.at("model_variant").get<std::string>();
  c.K = j.at("K").get<int>();
  c.L = j.at("L").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("extra")) c.extra = j.at("extra");
  for (const auto& pj : j.at("params")) {
    ParamRecord p;
    p.name = pj.at("name").get<std::string>();
    p.shape = pj.at("shape").get<Shape>();
    p.values = pj.at("values").get<std::vector<double>>();
    detail::require(detail::numel_of(p.shape) == p.values.size(),
                    "checkpoint param " + p.name + ": shape/value mismatch");
    c.params.push_back(std::move(p));
  }
  return c;
}

inline std::string serialize_checkpoint(const Checkpoint& c) {
  return to_json(c).dump(1) + "\n";
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << serialize_checkpoint(c);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace modgnn
