#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "modgnn/flocking.hpp"
#include "modgnn/geometry.hpp"
#include "modgnn/rng.hpp"

namespace modgnn {

// ||p_leader - centroid(followers)||
inline double leader_distance(const SwarmState& state) {
  const int n = state.n_agents();
  detail::require(n >= 2, "leader_distance: need at least two agents");
  Vec3 centroid{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    if (i == state.leader_index) continue;
    centroid += state.positions[i];
  }
  centroid = centroid * (1.0 / double(n - 1));
  return distance(state.positions[state.leader_index], centroid);
}

// Mean and population standard deviation over all unordered agent pairs.
inline std::pair<double, double> separation_stats(const SwarmState& state) {
  const int n = state.n_agents();
  detail::require(n >= 2, "separation_stats: need at least two agents");
  std::vector<double> dists;
  dists.reserve(std::size_t(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dists.push_back(distance(state.positions[i], state.positions[j]));
  double mean = 0.0;
  for (double d : dists) mean += d;
  mean /= double(dists.size());
  double var = 0.0;
  for (double d : dists) var += (d - mean) * (d - mean);
  var /= double(dists.size());
  return {mean, std::sqrt(var)};
}

struct Sphere {
  Vec3 center{0, 0, 0};
  double radius = 0.0;

  bool contains(const Vec3& p, double slack = 1e-9) const {
    return distance(center, p) <= radius + slack;
  }
};

namespace detail {

// Smallest sphere enclosing at most 4 points, found by trying candidate
// support subsets in order of increasing size.  Degenerate (collinear /
// coplanar) configurations fall through to a smaller support set.
inline Sphere sphere_of_support(const std::vector<Vec3>& p) {
  const double eps = 1e-9;
  Sphere best;
  bool found = false;
  auto consider = [&](const Sphere& s) {
    for (const Vec3& q : p)
      if (!s.contains(q, eps * (1.0 + s.radius))) return;
    if (!found || s.radius < best.radius) {
      best = s;
      found = true;
    }
  };

  const int n = static_cast<int>(p.size());
  if (n == 0) return {{0, 0, 0}, -1.0};
  for (int i = 0; i < n; ++i) consider({p[i], 0.0});
  if (found) return best;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      consider({(p[i] + p[j]) * 0.5, 0.5 * distance(p[i], p[j])});
  if (found) return best;
  // circumcircle of a triangle, embedded in its plane
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        const Vec3 u = p[j] - p[i], v = p[k] - p[i];
        const double uu = dot(u, u), vv = dot(v, v), uv = dot(u, v);
        const double det = uu * vv - uv * uv;
        if (det <= 1e-14 * uu * vv) continue;
        const double a = 0.5 * (uu * vv - vv * uv) / det;
        const double b = 0.5 * (vv * uu - uu * uv) / det;
        const Vec3 center = p[i] + u * a + v * b;
        consider({center, distance(center, p[i])});
      }
  if (found) return best;
  if (n == 4) {
    // circumsphere: 2(p_i - p_0) . x = |p_i|^2 - |p_0|^2
    double m[3][3], rhs[3];
    for (int r = 0; r < 3; ++r) {
      const Vec3 d = p[r + 1] - p[0];
      m[r][0] = 2 * d[0];
      m[r][1] = 2 * d[1];
      m[r][2] = 2 * d[2];
      rhs[r] = dot(p[r + 1], p[r + 1]) - dot(p[0], p[0]);
    }
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (std::abs(det) > 1e-12) {
      auto solve = [&](int col) {
        double a[3][3];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) a[r][c] = c == col ? rhs[r] : m[r][c];
        return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])) /
               det;
      };
      const Vec3 center{solve(0), solve(1), solve(2)};
      consider({center, distance(center, p[0])});
    }
  }
  return found ? best : Sphere{{0, 0, 0}, -1.0};
}

inline Sphere welzl(std::vector<Vec3>& pts, std::size_t n,
                    std::vector<Vec3>& boundary) {
  if (n == 0 || boundary.size() == 4) return sphere_of_support(boundary);
  const Vec3 p = pts[n - 1];
  Sphere s = welzl(pts, n - 1, boundary);
  if (s.radius >= 0.0 && s.contains(p, 1e-9 * (1.0 + s.radius))) return s;
  boundary.push_back(p);
  s = welzl(pts, n - 1, boundary);
  boundary.pop_back();
  return s;
}

}  // namespace detail

// Exact minimum enclosing ball (randomized incremental, <= 4 support
// points).  The shuffle seed is fixed, so results are deterministic.
inline Sphere min_enclosing_sphere(const std::vector<Vec3>& points) {
  detail::require(!points.empty(), "min_enclosing_sphere: need a point");
  std::vector<Vec3> pts = points;
  Rng rng(seeds::derive(0, "welzl_shuffle"));
  rng.shuffle(pts);
  std::vector<Vec3> boundary;
  Sphere s = detail::welzl(pts, pts.size(), boundary);
  if (s.radius < 0.0) s = {points[0], 0.0};
  return s;
}

// Cohesion metric: diameter of the smallest sphere containing all agents.
inline double cohesion_diameter(const std::vector<Vec3>& positions) {
  return 2.0 * min_enclosing_sphere(positions).radius;
}

}  // namespace modgnn
