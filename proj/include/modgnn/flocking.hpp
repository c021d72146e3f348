#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "modgnn/geometry.hpp"
#include "modgnn/graph.hpp"
#include "modgnn/rng.hpp"
#include "modgnn/tensor.hpp"

namespace modgnn {

struct SwarmState {
  std::vector<Vec3> positions;   // meters
  std::vector<Vec3> velocities;  // m/s
  int leader_index = 0;
  double time = 0.0;  // seconds

  int n_agents() const { return static_cast<int>(positions.size()); }
};

// Reynolds gains for cohesion / separation / alignment.
struct FlockingGains {
  double cohesion = 0.05;
  double separation = 1.0;
  double alignment = 0.1;
};

struct EnvConfig {
  int n_agents = 8;
  double r_com = 3.5;        // meters
  double dt = 0.05;          // seconds
  int episode_len = 200;     // steps
  Vec3 spawn_extent = {6.0, 6.0, 2.0};  // box side lengths, centered at origin
  double min_separation = 0.7;          // meters, at spawn
  double leader_noise_std = 0.05;       // m/s added per step
  double max_speed = 1.0;               // m/s
  double tracking_gain = 2.0;           // 1/s
  std::uint64_t seed = 0;
};

// Reynolds flocking target velocities over the given graph's neighborhoods.
// The expert itself is run on the fully connected graph; passing an r_com
// graph yields the "partial information" version.
inline std::vector<Vec3> reynolds_expert(const SwarmState& state,
                                         const CommGraph& graph,
                                         const FlockingGains& gains) {
  const int n = state.n_agents();
  detail::require(graph.n_agents == n, "reynolds_expert: graph size mismatch");
  std::vector<Vec3> actions(n, Vec3{0.0, 0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    Vec3 cohesion{0, 0, 0}, separation{0, 0, 0}, alignment{0, 0, 0};
    for (int j = 0; j < n; ++j) {
      if (!graph.edge(i, j)) continue;
      const Vec3 dp = state.positions[j] - state.positions[i];
      const double pd = norm(dp);
      if (pd == 0.0) {
        throw std::domain_error(
            "reynolds_expert: coincident neighbor positions");
      }
      cohesion += dp * pd;
      separation += (dp * -1.0) * (1.0 / (pd * pd * pd));
      const Vec3 dv = state.velocities[j] - state.velocities[i];
      alignment += dv * norm(dv);
    }
    actions[i] = gains.cohesion * cohesion + gains.separation * separation +
                 gains.alignment * alignment;
  }
  return actions;
}

// First-order velocity tracking toward the (speed-clamped) target.
inline SwarmState step_dynamics(const SwarmState& state,
                                const std::vector<Vec3>& actions,
                                const EnvConfig& cfg) {
  const int n = state.n_agents();
  detail::require(static_cast<int>(actions.size()) == n,
                  "step_dynamics: one action per agent required");
  SwarmState next = state;
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a)
      detail::require(std::isfinite(actions[i][a]),
                      "step_dynamics: non-finite action");
    const Vec3 target = clamp_norm(actions[i], cfg.max_speed);
    next.velocities[i] =
        state.velocities[i] +
        (target - state.velocities[i]) * (cfg.tracking_gain * cfg.dt);
    next.positions[i] = state.positions[i] + next.velocities[i] * cfg.dt;
  }
  next.time = state.time + cfg.dt;
  return next;
}

// Leader control: target velocity with integrated Gaussian noise, clamped
// to the speed limit.
inline Vec3 leader_action(const Vec3& prev_target, double noise_std,
                          double max_speed, Rng& rng) {
  Vec3 t = prev_target;
  for (int a = 0; a < 3; ++a) t[a] += rng.gaussian(0.0, noise_std);
  return clamp_norm(t, max_speed);
}

// Uniform positions in the spawn box, rejection-sampled to keep every pair
// at least min_separation apart.  Velocities start at zero; agent 0 leads.
inline SwarmState spawn_swarm(const EnvConfig& cfg, Rng& rng) {
  detail::require(cfg.n_agents >= 1, "spawn_swarm: need at least one agent");
  detail::require(cfg.min_separation > 0.0,
                  "spawn_swarm: min_separation must be positive");
  SwarmState s;
  s.leader_index = 0;
  s.time = 0.0;
  s.velocities.assign(cfg.n_agents, Vec3{0, 0, 0});
  const long budget = 1000L * cfg.n_agents;
  long attempts = 0;
  while (static_cast<int>(s.positions.size()) < cfg.n_agents) {
    if (++attempts > budget) {
      throw std::runtime_error(
          "spawn_swarm: placement failed; box too small for n_agents at "
          "min_separation");
    }
    Vec3 p;
    for (int a = 0; a < 3; ++a)
      p[a] = rng.uniform(-cfg.spawn_extent[a] / 2.0, cfg.spawn_extent[a] / 2.0);
    bool ok = true;
    for (const Vec3& q : s.positions)
      if (distance(p, q) < cfg.min_separation) {
        ok = false;
        break;
      }
    if (ok) s.positions.push_back(p);
  }
  return s;
}

// o_i = (p_i, v_i), stacked as an [n x 6] constant tensor.
inline Tensor observations_of(const SwarmState& state) {
  const int n = state.n_agents();
  std::vector<double> rows(std::size_t(n) * 6);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      rows[std::size_t(i) * 6 + a] = state.positions[i][a];
      rows[std::size_t(i) * 6 + 3 + a] = state.velocities[i][a];
    }
  }
  return Tensor({n, 6}, std::move(rows));
}

}  // namespace modgnn
