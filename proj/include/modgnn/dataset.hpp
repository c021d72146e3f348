#pragma once

#include <atomic>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "modgnn/flocking.hpp"
#include "modgnn/graph.hpp"

namespace modgnn {

constexpr int kDatasetFormatVersion = 1;

struct Frame {
  SwarmState state;
  CommGraph graph;               // at r_com, recorded for model inputs
  std::vector<Vec3> expert_actions;  // full-graph expert; leader row = its target
};

struct EpisodeRecord {
  std::vector<Frame> frames;
};

struct Dataset {
  EnvConfig env;
  FlockingGains gains;
  std::vector<EpisodeRecord> episodes;

  std::size_t n_frames() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.frames.size();
    return n;
  }
};

// One expert episode: spawn, then at every step record the state, the
// r_com communication graph, and the action labels (followers: Eq-style
// flocking on the full graph; leader: its noisy velocity target), then
// advance the dynamics with those same actions.
inline EpisodeRecord generate_episode(const EnvConfig& cfg,
                                      const FlockingGains& gains,
                                      std::uint64_t episode_seed) {
  Rng spawn_rng(seeds::derive(episode_seed, "spawn"));
  Rng leader_rng(seeds::derive(episode_seed, "leader"));
  SwarmState state = spawn_swarm(cfg, spawn_rng);
  const CommGraph expert_graph = full_graph(cfg.n_agents);
  Vec3 leader_target{0, 0, 0};

  EpisodeRecord ep;
  ep.frames.reserve(cfg.episode_len);
  for (int t = 0; t < cfg.episode_len; ++t) {
    std::vector<Vec3> actions = reynolds_expert(state, expert_graph, gains);
    leader_target = leader_action(leader_target, cfg.leader_noise_std,
                                  cfg.max_speed, leader_rng);
    actions[state.leader_index] = leader_target;

    Frame f;
    f.state = state;
    f.graph = build_comm_graph(state.positions, cfg.r_com);
    f.expert_actions = actions;
    ep.frames.push_back(std::move(f));

    state = step_dynamics(state, actions, cfg);
  }
  return ep;
}

// Episodes are independent; each derives its own seed from the master, so
// generation order (and --jobs) cannot change the result.
inline Dataset generate_dataset(const EnvConfig& cfg,
                                const FlockingGains& gains, int n_episodes,
                                int jobs = 1) {
  detail::require(n_episodes >= 0, "generate_dataset: n_episodes >= 0");
  Dataset ds;
  ds.env = cfg;
  ds.gains = gains;
  ds.episodes.resize(n_episodes);
  auto work = [&](int e) {
    ds.episodes[e] =
        generate_episode(cfg, gains, seeds::derive(cfg.seed, "episode", e));
  };
  if (jobs <= 1 || n_episodes <= 1) {
    for (int e = 0; e < n_episodes; ++e) work(e);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int n_workers = std::min(jobs, n_episodes);
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (int e = next.fetch_add(1); e < n_episodes; e = next.fetch_add(1))
          work(e);
      });
    }
    for (auto& th : pool) th.join();
  }
  return ds;
}

// ---------------------------------------------------------------------------
// serialization: one JSON header line, then one JSON line per frame
// ---------------------------------------------------------------------------

namespace detail {

// upper-triangle adjacency bits (i < j), row-major, packed into hex
inline std::string adjacency_bitmask(const CommGraph& g) {
  std::string hex;
  int nibble = 0, bits = 0;
  auto flush = [&] {
    hex.push_back("0123456789abcdef"[nibble]);
    nibble = 0;
    bits = 0;
  };
  for (int i = 0; i < g.n_agents; ++i)
    for (int j = i + 1; j < g.n_agents; ++j) {
      nibble = (nibble << 1) | (g.edge(i, j) ? 1 : 0);
      if (++bits == 4) flush();
    }
  if (bits > 0) {
    nibble <<= (4 - bits);
    flush();
  }
  return hex;
}

inline CommGraph adjacency_from_bitmask(int n, const std::string& hex) {
  CommGraph g(n);
  std::size_t pos = 0;
  int bits_left = 0, nibble = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (bits_left == 0) {
        require(pos < hex.size(), "adjacency bitmask too short");
        const char c = hex[pos++];
        nibble = c <= '9' ? c - '0' : c - 'a' + 10;
        bits_left = 4;
      }
      if (nibble & 0x8) g.set_edge(i, j);
      nibble = (nibble << 1) & 0xf;
      --bits_left;
    }
  return g;
}

inline nlohmann::json vec3s_to_json(const std::vector<Vec3>& v) {
  nlohmann::json j = nlohmann::json::array();
  for (const Vec3& x : v) j.push_back({x[0], x[1], x[2]});
  return j;
}

inline std::vector<Vec3> vec3s_from_json(const nlohmann::json& j) {
  std::vector<Vec3> out;
  for (const auto& x : j) out.push_back({x[0], x[1], x[2]});
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const EnvConfig& c) {
  return {{"n_agents", c.n_agents},
          {"r_com", c.r_com},
          {"dt", c.dt},
          {"episode_len", c.episode_len},
          {"spawn_extent", {c.spawn_extent[0], c.spawn_extent[1], c.spawn_extent[2]}},
          {"min_separation", c.min_separation},
          {"leader_noise_std", c.leader_noise_std},
          {"max_speed", c.max_speed},
          {"tracking_gain", c.tracking_gain},
          {"seed", c.seed}};
}

inline EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  c.n_agents = j.at("n_agents").get<int>();
  c.r_com = j.at("r_com").get<double>();
  c.dt = j.at("dt").get<double>();
  c.episode_len = j.at("episode_len").get<int>();
  const auto& e = j.at("spawn_extent");
  c.spawn_extent = {e[0], e[1], e[2]};
  c.min_separation = j.at("min_separation").get<double>();
  c.leader_noise_std = j.at("leader_noise_std").get<double>();
  c.max_speed = j.at("max_speed").get<double>();
  c.tracking_gain = j.at("tracking_gain").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json to_json(const FlockingGains& g) {
  return {{"cohesion", g.cohesion},
          {"separation", g.separation},
          {"alignment", g.alignment}};
}

inline FlockingGains gains_from_json(const nlohmann::json& j) {
  return {j.at("cohesion").get<double>(), j.at("separation").get<double>(),
          j.at("alignment").get<double>()};
}

inline void save_dataset(const Dataset& ds, const std::string& path,
                         const nlohmann::json& resolved_config = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  nlohmann::json header = {{"format_version", kDatasetFormatVersion},
                           {"env", to_json(ds.env)},
                           {"gains", to_json(ds.gains)},
                           {"n_episodes", ds.episodes.size()}};
  if (!resolved_config.is_null()) header["config"] = resolved_config;
  out << header.dump() << "\n";
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    for (std::size_t t = 0; t < ds.episodes[e].frames.size(); ++t) {
      const Frame& f = ds.episodes[e].frames[t];
      nlohmann::json line = {
          {"episode", e},
          {"t", t},
          {"positions", detail::vec3s_to_json(f.state.positions)},
          {"velocities", detail::vec3s_to_json(f.state.velocities)},
          {"leader_index", f.state.leader_index},
          {"adjacency", detail::adjacency_bitmask(f.graph)},
          {"expert_actions", detail::vec3s_to_json(f.expert_actions)}};
      out << line.dump() << "\n";
    }
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)),
                  "dataset file is empty");
  nlohmann::json header = nlohmann::json::parse(line);
  detail::require(header.at("format_version").get<int>() ==
                      kDatasetFormatVersion,
                  "unsupported dataset format_version");
  Dataset ds;
  ds.env = env_config_from_json(header.at("env"));
  ds.gains = gains_from_json(header.at("gains"));
  ds.episodes.resize(header.at("n_episodes").get<std::size_t>());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Frame f;
    f.state.positions = detail::vec3s_from_json(j.at("positions"));
    f.state.velocities = detail::vec3s_from_json(j.at("velocities"));
    f.state.leader_index = j.at("leader_index").get<int>();
    const std::size_t e = j.at("episode").get<std::size_t>();
    const std::size_t t = j.at("t").get<std::size_t>();
    f.state.time = double(t) * ds.env.dt;
    f.graph = detail::adjacency_from_bitmask(f.state.n_agents(),
                                             j.at("adjacency").get<std::string>());
    f.expert_actions = detail::vec3s_from_json(j.at("expert_actions"));
    detail::require(e < ds.episodes.size(), "frame episode index out of range");
    detail::require(t == ds.episodes[e].frames.size(),
                    "dataset frames out of order");
    ds.episodes[e].frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace modgnn
