#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "modgnn/dataset.hpp"
#include "modgnn/metrics.hpp"
#include "modgnn/model.hpp"

namespace modgnn {

// Anything that maps (state, r_com graph) to per-agent target velocities.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(int /*n_agents*/) {}
  virtual std::vector<Vec3> actions(const SwarmState& state,
                                    const CommGraph& graph) = 0;
};

class ModelPolicy final : public Policy {
 public:
  explicit ModelPolicy(const Model& model, bool delayed_comm = false)
      : model_(model), delayed_(delayed_comm) {}

  void begin_episode(int n_agents) override {
    if (delayed_) delay_ = model_.make_delay_state(n_agents);
  }

  std::vector<Vec3> actions(const SwarmState& state,
                            const CommGraph& graph) override {
    NoGradGuard ng;
    Tensor obs = observations_of(state);
    Tensor out = delayed_ ? model_.forward_frame_delayed(obs, graph, delay_)
                          : model_.forward_frame(obs, graph);
    std::vector<Vec3> acts(state.n_agents());
    for (int i = 0; i < state.n_agents(); ++i)
      for (int a = 0; a < 3; ++a)
        acts[i][a] = out.data()[std::size_t(i) * 3 + a];
    return acts;
  }

 private:
  const Model& model_;
  bool delayed_;
  DelayState delay_;
};

// The expert wrapped as a policy (it sees the full graph, like in
// training-label generation).
class ExpertPolicy final : public Policy {
 public:
  explicit ExpertPolicy(FlockingGains gains) : gains_(gains) {}
  std::vector<Vec3> actions(const SwarmState& state,
                            const CommGraph&) override {
    return reynolds_expert(state, full_graph(state.n_agents()), gains_);
  }

 private:
  FlockingGains gains_;
};

class ZeroPolicy final : public Policy {
 public:
  std::vector<Vec3> actions(const SwarmState& state,
                            const CommGraph&) override {
    return std::vector<Vec3>(state.n_agents(), Vec3{0, 0, 0});
  }
};

// One Table-style result row.
struct MetricsRow {
  std::string variant;
  int K = 0;
  int N = 0;
  double error = 0.0;  // MSE vs the expert along the rolled-out trajectory
  double leader_dist_mean = 0.0, leader_dist_std = 0.0;
  double cohesion_mean = 0.0, cohesion_std = 0.0;
  double separation_mean = 0.0, separation_std = 0.0;
};

namespace detail {

struct Accumulator {
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / double(n) : 0.0; }
  double stddev() const {
    if (!n) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / double(n) - m * m));
  }
};

}  // namespace detail

// Closed-loop evaluation: the policy drives the swarm (leader excepted,
// which follows its noisy target), the expert is recomputed on the full
// graph every step purely as the error reference.  Episode seeds are
// derived from eval_seed, so every policy sees the same starting states.
inline MetricsRow rollout(Policy& policy, const std::string& name,
                          const EnvConfig& cfg, const FlockingGains& gains,
                          int episodes, std::uint64_t eval_seed) {
  MetricsRow row;
  row.variant = name;
  row.N = cfg.n_agents;
  detail::Accumulator err, leader, cohesion, separation;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t ep_seed = seeds::derive(eval_seed, "eval_episode", e);
    Rng spawn_rng(seeds::derive(ep_seed, "spawn"));
    Rng leader_rng(seeds::derive(ep_seed, "leader"));
    SwarmState state = spawn_swarm(cfg, spawn_rng);
    const CommGraph expert_graph = full_graph(cfg.n_agents);
    Vec3 leader_target{0, 0, 0};
    policy.begin_episode(cfg.n_agents);

    for (int t = 0; t < cfg.episode_len; ++t) {
      const CommGraph graph = build_comm_graph(state.positions, cfg.r_com);
      std::vector<Vec3> acts = policy.actions(state, graph);
      const std::vector<Vec3> expert =
          reynolds_expert(state, expert_graph, gains);
      leader_target = leader_action(leader_target, cfg.leader_noise_std,
                                    cfg.max_speed, leader_rng);
      acts[state.leader_index] = leader_target;

      double sq = 0.0;
      for (int i = 0; i < cfg.n_agents; ++i) {
        if (i == state.leader_index) continue;
        const Vec3 d = acts[i] - expert[i];
        sq += dot(d, d);
      }
      err.add(sq / (3.0 * double(cfg.n_agents - 1)));
      leader.add(leader_distance(state));
      cohesion.add(cohesion_diameter(state.positions));
      // separation samples are the pairwise distances themselves
      for (int i = 0; i < cfg.n_agents; ++i)
        for (int j = i + 1; j < cfg.n_agents; ++j)
          separation.add(distance(state.positions[i], state.positions[j]));

      state = step_dynamics(state, acts, cfg);
    }
  }
  row.error = err.mean();
  row.leader_dist_mean = leader.mean();
  row.leader_dist_std = leader.stddev();
  row.cohesion_mean = cohesion.mean();
  row.cohesion_std = cohesion.stddev();
  row.separation_mean = separation.mean();
  row.separation_std = separation.stddev();
  return row;
}

inline MetricsRow rollout_model(const Model& model, const EnvConfig& cfg,
                                const FlockingGains& gains, int episodes,
                                std::uint64_t eval_seed,
                                bool delayed_comm = false) {
  detail::require(!model.is_central() || model.cfg.n_agents == cfg.n_agents,
                  "rollout: central checkpoint requires matching N");
  ModelPolicy p(model, delayed_comm);
  MetricsRow row = rollout(p, to_string(model.cfg.variant), cfg, gains,
                           episodes, eval_seed);
  row.K = model.cfg.K;
  return row;
}

// Full cross of checkpoints x swarm sizes; the central variant is skipped
// at any N other than its training N.
inline std::vector<MetricsRow> experiment_matrix(
    const std::vector<Model>& models, const std::vector<int>& n_values,
    const EnvConfig& base_cfg, const FlockingGains& gains, int episodes,
    std::uint64_t eval_seed, bool delayed_comm = false) {
  std::vector<MetricsRow> rows;
  for (const Model& m : models) {
    for (int n : n_values) {
      if (m.is_central() && n != m.cfg.n_agents) continue;
      EnvConfig cfg = base_cfg;
      cfg.n_agents = n;
      rows.push_back(
          rollout_model(m, cfg, gains, episodes, eval_seed, delayed_comm));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows,
                               const std::vector<std::string>& preamble = {}) {
  std::ostringstream os;
  for (const std::string& line : preamble) os << "# " << line << "\n";
  os << "variant,K,N,error,leader_dist_mean,leader_dist_std,cohesion_mean,"
        "cohesion_std,separation_mean,separation_std\n";
  for (const MetricsRow& r : rows) {
    os << r.variant << ',' << r.K << ',' << r.N << ',' << format_double(r.error)
       << ',' << format_double(r.leader_dist_mean) << ','
       << format_double(r.leader_dist_std) << ','
       << format_double(r.cohesion_mean) << ',' << format_double(r.cohesion_std)
       << ',' << format_double(r.separation_mean) << ','
       << format_double(r.separation_std) << "\n";
  }
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

}  // namespace modgnn
