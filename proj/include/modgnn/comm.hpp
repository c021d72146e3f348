#pragma once

#include <numeric>
#include <vector>

#include "modgnn/graph.hpp"
#include "modgnn/tensor.hpp"

// Message aggregation: per-agent k-hop data sets, k = 0..K.  Hop 0 is the
// agent's own compressed observation; hop k >= 1 holds one vector per
// neighbor, formed from the neighbors' (k-1)-hop aggregates.  Two drivers
// share the same recursion: a synchronous one that evaluates all hops at a
// single timestep, and a delayed one that reads the previous timestep's
// cache so only one exchange round happens per step.

namespace modgnn {

// How a transmission is transformed on receipt.  Both rules are linear in
// the incoming aggregate, which is what lets senders pre-sum their sets:
//   identity             -> receive the aggregate as-is (adjacency GSO)
//   laplacian_difference -> receiver's own same-hop aggregate minus the
//                           incoming one (Laplacian GSO)
enum class CommRuleKind { identity, laplacian_difference };

inline const char* to_string(CommRuleKind k) {
  return k == CommRuleKind::identity ? "identity" : "laplacian_difference";
}

inline CommRuleKind comm_rule_for(GsoKind k) {
  return k == GsoKind::adjacency ? CommRuleKind::identity
                                 : CommRuleKind::laplacian_difference;
}

inline GsoKind gso_kind_for(CommRuleKind k) {
  return k == CommRuleKind::identity ? GsoKind::adjacency
                                     : GsoKind::laplacian;
}

// Single-vector form of the rule (the contract the aggregators implement
// in bulk): `incoming` is the sender-side aggregate, `local` the
// receiver's own aggregate at the same hop level.
inline std::vector<double> comm_rule_apply(CommRuleKind kind,
                                           std::span<const double> incoming,
                                           std::span<const double> local) {
  detail::require(incoming.size() == local.size(),
                  "comm rule: width mismatch");
  std::vector<double> out(incoming.begin(), incoming.end());
  if (kind == CommRuleKind::laplacian_difference) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = local[i] - out[i];
  }
  return out;
}

// Per-agent k-hop data sets in plain form: hops[agent][k] is the list of
// per-neighbor vectors (hop 0 is the singleton {c_i}).
struct NeighborhoodData {
  int n_agents = 0;
  int K = 0;
  int width = 0;
  std::vector<std::vector<std::vector<std::vector<double>>>> hops;

  const std::vector<std::vector<double>>& set(int agent, int k) const {
    return hops[agent][k];
  }
};

// Same data kept as stacked row tensors, one per hop, with a segment id
// (receiving agent) per row.  This is the differentiable path the models
// consume; NeighborhoodData is derived from it.
struct HopStacks {
  int n_agents = 0;
  int K = 0;
  int width = 0;
  std::vector<Tensor> rows;           // rows[k]: [m_k x width]
  std::vector<std::vector<int>> seg;  // seg[k]: receiving agent per row
};

namespace detail {

inline std::vector<int> iota_segments(int n) {
  std::vector<int> s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

inline Tensor hop_messages(const Tensor& level, const EdgeList& e,
                           CommRuleKind rule) {
  Tensor sent = gather_rows(level, e.send);
  if (rule == CommRuleKind::identity) return sent;
  return sub(gather_rows(level, e.recv), sent);
}

}  // namespace detail

// Synchronous evaluation of the hop recursion at a single timestep.
// With the identity rule the per-agent neighbor sums of hop k reproduce
// row i of A^k c; with the laplacian rule, row i of L^k c.
inline HopStacks aggregate_khop_stacked(const Tensor& c, const EdgeList& e,
                                        int K, CommRuleKind rule) {
  detail::require(K >= 0, "aggregate: K must be nonnegative");
  detail::require_matrix(c, "aggregate input");
  detail::require(c.shape()[0] == e.n_agents,
                  "aggregate: feature rows must match agent count");
  HopStacks hs;
  hs.n_agents = e.n_agents;
  hs.K = K;
  hs.width = c.shape()[1];
  hs.rows.push_back(c);
  hs.seg.push_back(detail::iota_segments(e.n_agents));
  Tensor level = c;  // per-agent hop aggregates S^k c
  for (int k = 1; k <= K; ++k) {
    Tensor y = detail::hop_messages(level, e, rule);
    level = segment_sum(y, e.recv, e.n_agents);
    hs.rows.push_back(y);
    hs.seg.push_back(e.recv);
  }
  return hs;
}

inline NeighborhoodData to_neighborhood_data(const HopStacks& hs) {
  NeighborhoodData nd;
  nd.n_agents = hs.n_agents;
  nd.K = hs.K;
  nd.width = hs.width;
  nd.hops.assign(hs.n_agents, {});
  for (auto& h : nd.hops) h.resize(hs.K + 1);
  for (int k = 0; k <= hs.K; ++k) {
    const auto rows = hs.rows[k].data();
    const auto& seg = hs.seg[k];
    for (std::size_t r = 0; r < seg.size(); ++r) {
      nd.hops[seg[r]][k].emplace_back(rows.begin() + r * hs.width,
                                      rows.begin() + (r + 1) * hs.width);
    }
  }
  return nd;
}

inline NeighborhoodData aggregate_khop_centralized(const Tensor& c,
                                                   const CommGraph& g, int K,
                                                   CommRuleKind rule) {
  return to_neighborhood_data(aggregate_khop_stacked(c, edges_of(g), K, rule));
}

// Per-agent, per-level aggregates carried between timesteps.  Level k is
// populated once k+1 steps have run since reset; only levels 0..K-1 are
// kept because level K is never requested as a (k-1) source.
struct DelayCache {
  int n_agents = 0;
  int K = 0;
  long steps_completed = 0;
  std::vector<Tensor> levels;  // levels[k]: [n x width], detached
  long last_vectors_per_edge = 0;

  void reset(int n, int K_) {
    detail::require(n > 0 && K_ >= 0, "delay cache: bad dimensions");
    n_agents = n;
    K = K_;
    steps_completed = 0;
    levels.assign(std::size_t(std::max(K_, 0)), Tensor());
    last_vectors_per_edge = 0;
  }

  int populated_levels() const {
    return static_cast<int>(std::min<long>(steps_completed, K));
  }
};

// One communication round: hop-k data at time t comes from the (k-1)-hop
// cache of time t-1.  Unpopulated hops yield empty sets (zero-row stacks).
inline HopStacks message_step_delayed_stacked(DelayCache& cache,
                                              const Tensor& c,
                                              const EdgeList& e,
                                              CommRuleKind rule) {
  detail::require_matrix(c, "delayed step input");
  detail::require(cache.n_agents == e.n_agents &&
                      c.shape()[0] == e.n_agents,
                  "delayed step: cache/agent count mismatch");
  const int n = e.n_agents;
  const int d = c.shape()[1];
  const int have = cache.populated_levels();

  HopStacks hs;
  hs.n_agents = n;
  hs.K = cache.K;
  hs.width = d;
  hs.rows.push_back(c);
  hs.seg.push_back(detail::iota_segments(n));
  for (int k = 1; k <= cache.K; ++k) {
    if (k - 1 < have) {
      hs.rows.push_back(detail::hop_messages(cache.levels[k - 1], e, rule));
      hs.seg.push_back(e.recv);
    } else {
      hs.rows.push_back(Tensor::zeros({0, d}));
      hs.seg.emplace_back();
    }
  }

  // cache this step's aggregates for the next round
  if (cache.K > 0) {
    cache.levels[0] = c.detach();
    for (int k = 1; k < cache.K; ++k) {
      if (k - 1 < have)
        cache.levels[k] = segment_sum(hs.rows[k], hs.seg[k], n).detach();
    }
  }
  // one pre-summed vector per populated cache level crosses each edge
  cache.last_vectors_per_edge = have;
  cache.steps_completed += 1;
  return hs;
}

inline NeighborhoodData message_step_delayed(DelayCache& cache,
                                             const Tensor& c,
                                             const CommGraph& g,
                                             CommRuleKind rule) {
  return to_neighborhood_data(
      message_step_delayed_stacked(cache, c, edges_of(g), rule));
}

}  // namespace modgnn
