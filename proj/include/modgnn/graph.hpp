#pragma once

#include <cstdint>
#include <vector>

#include "modgnn/geometry.hpp"
#include "modgnn/tensor.hpp"

namespace modgnn {

// Undirected communication graph: symmetric adjacency, zero diagonal.
// The 0-hop (self) channel is handled by the aggregation base case, not here.
struct CommGraph {
  int n_agents = 0;
  std::vector<std::uint8_t> adjacency;  // n x n row-major

  CommGraph() = default;
  explicit CommGraph(int n) : n_agents(n), adjacency(std::size_t(n) * n, 0) {}

  bool edge(int i, int j) const {
    return adjacency[std::size_t(i) * n_agents + j] != 0;
  }
  void set_edge(int i, int j) {
    adjacency[std::size_t(i) * n_agents + j] = 1;
    adjacency[std::size_t(j) * n_agents + i] = 1;
  }
  int degree(int i) const {
    int d = 0;
    for (int j = 0; j < n_agents; ++j) d += edge(i, j) ? 1 : 0;
    return d;
  }
  bool operator==(const CommGraph&) const = default;
};

// Edge iff Euclidean distance < r_com (strict), i != j.
inline CommGraph build_comm_graph(const std::vector<Vec3>& positions,
                                  double r_com) {
  detail::require(r_com > 0.0, "build_comm_graph: r_com must be positive");
  const int n = static_cast<int>(positions.size());
  CommGraph g(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (distance(positions[i], positions[j]) < r_com) g.set_edge(i, j);
  return g;
}

inline CommGraph full_graph(int n) {
  CommGraph g(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g.set_edge(i, j);
  return g;
}

enum class GsoKind { adjacency, laplacian };

inline const char* to_string(GsoKind k) {
  return k == GsoKind::adjacency ? "adjacency" : "laplacian";
}

// Graph shift operator: dense n x n matrix respecting the graph sparsity.
struct Gso {
  int n = 0;
  GsoKind kind = GsoKind::adjacency;
  std::vector<double> matrix;  // row-major

  double at(int i, int j) const { return matrix[std::size_t(i) * n + j]; }
};

inline Gso adjacency_gso(const CommGraph& g) {
  Gso s;
  s.n = g.n_agents;
  s.kind = GsoKind::adjacency;
  s.matrix.assign(g.adjacency.begin(), g.adjacency.end());
  return s;
}

// L = D - A with D the degree diagonal; rows sum to zero.
inline Gso laplacian_gso(const CommGraph& g) {
  Gso s;
  s.n = g.n_agents;
  s.kind = GsoKind::laplacian;
  s.matrix.assign(std::size_t(s.n) * s.n, 0.0);
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.n; ++j) {
      if (g.edge(i, j)) {
        s.matrix[std::size_t(i) * s.n + j] = -1.0;
      }
    }
    s.matrix[std::size_t(i) * s.n + i] = g.degree(i);
  }
  return s;
}

inline Gso make_gso(const CommGraph& g, GsoKind kind) {
  return kind == GsoKind::adjacency ? adjacency_gso(g) : laplacian_gso(g);
}

// Directed edge list grouped by receiver, senders ascending.  Used by the
// aggregation pipeline so row order (and hence float summation order) is
// fixed for a given graph.
struct EdgeList {
  int n_agents = 0;
  std::vector<int> recv;  // one entry per directed edge
  std::vector<int> send;

  std::size_t n_directed_edges() const { return recv.size(); }
};

inline EdgeList edges_of(const CommGraph& g) {
  EdgeList e;
  e.n_agents = g.n_agents;
  for (int i = 0; i < g.n_agents; ++i)
    for (int j = 0; j < g.n_agents; ++j)
      if (g.edge(i, j)) {
        e.recv.push_back(i);
        e.send.push_back(j);
      }
  return e;
}

// Conjugate the graph by a permutation: node i of the result is node
// perm[i] of the input.
inline CommGraph permute_graph(const CommGraph& g, const std::vector<int>& perm) {
  CommGraph out(g.n_agents);
  for (int i = 0; i < g.n_agents; ++i)
    for (int j = 0; j < g.n_agents; ++j)
      if (g.edge(perm[i], perm[j]))
        out.adjacency[std::size_t(i) * g.n_agents + j] = 1;
  return out;
}

}  // namespace modgnn
