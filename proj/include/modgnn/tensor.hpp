#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

// Dense double tensors with reverse-mode automatic differentiation.
// Ops record a backward closure on the implicit tape (the DAG of nodes);
// backward() on a scalar walks the DAG in reverse topological order and
// accumulates gradients additively into every requires_grad leaf.

namespace modgnn {

using Shape = std::vector<int>;

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (int e : s) {
    require(e >= 0, "tensor extent must be nonnegative");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace detail

// Finiteness checking after every forward/backward op.  On by default in
// debug builds; tests can flip it at runtime in any build.
inline bool& finite_checks_enabled() {
#ifdef NDEBUG
  thread_local bool enabled = false;
#else
  thread_local bool enabled = true;
#endif
  return enabled;
}

// Thread-local switch: with gradients disabled, ops produce constant
// tensors and no graph is recorded (inference / rollout mode).
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value once touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pushes this node's grad into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* where) {
  if (!finite_checks_enabled()) return;
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string("non-finite value in ") + where);
    }
  }
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    detail::require(detail::numel_of(shape) == values.size(),
                    "data length must equal product of shape extents");
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad && grad_enabled();
    if (node_->requires_grad) node_->ensure_grad();
    detail::check_finite(node_->value, "tensor construction");
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(detail::numel_of(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  int rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
  int cols() const {
    return node_->shape.size() < 2 ? 1 : node_->shape[1];
  }

  bool requires_grad() const { return node_->requires_grad; }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  double item() const {
    detail::require(numel() == 1, "item() requires a scalar tensor");
    return node_->value[0];
  }

  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  // Constant copy of the values, detached from the tape.
  Tensor detach() const { return Tensor(node_->shape, node_->value, false); }

  std::shared_ptr<TensorNode> node() const { return node_; }

  // Reverse pass.  `*this` must be a scalar produced by taped ops.
  void backward() const;

 private:
  friend Tensor make_op_result(Shape shape, std::vector<double> value,
                               std::vector<Tensor> parents,
                               std::function<void(TensorNode&)> backprop);
  std::shared_ptr<TensorNode> node_;
};

inline Tensor make_op_result(Shape shape, std::vector<double> value,
                             std::vector<Tensor> parents,
                             std::function<void(TensorNode&)> backprop) {
  detail::check_finite(value, "forward op");
  Tensor out;
  out.node_ = std::make_shared<TensorNode>();
  out.node_->shape = std::move(shape);
  out.node_->value = std::move(value);
  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
  }
  out.node_->requires_grad = rg;
  if (rg) {
    out.node_->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.node_->parents.push_back(p.node());
    out.node_->backprop = std::move(backprop);
  }
  return out;
}

inline void Tensor::backward() const {
  detail::require(numel() == 1, "backward() requires a scalar loss");
  detail::require(node_->requires_grad,
                  "backward() requires a taped (requires_grad) result");

  // reverse topological order via iterative post-order DFS
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      TensorNode* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) {
      n->backprop(*n);
      if (finite_checks_enabled()) {
        for (const auto& p : n->parents) {
          if (p->requires_grad) detail::check_finite(p->grad, "backward op");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

namespace detail {

inline void require_matrix(const Tensor& t, const char* name) {
  require(t.shape().size() == 2,
          std::string(name) + " must be a 2-d tensor, got " +
              shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul lhs");
  detail::require_matrix(b, "matmul rhs");
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  detail::require(k == k2, "matmul: inner dimensions differ (" +
                               std::to_string(k) + " vs " +
                               std::to_string(k2) + ")");
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[std::size_t(i) * k + p];
      const double* brow = &bv[std::size_t(p) * n];
      double* orow = &out[std::size_t(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op_result(
      {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA = dC * B^T
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double g = self.grad[std::size_t(i) * n + j];
              if (g == 0.0) continue;
              const double* brow = &pb.value[std::size_t(0) * n + j];
              for (int p = 0; p < k; ++p)
                pa.grad[std::size_t(i) * k + p] +=
                    g * brow[std::size_t(p) * n];
            }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB = A^T * dC
          for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i) {
              const double apv = pa.value[std::size_t(i) * k + p];
              if (apv == 0.0) continue;
              for (int j = 0; j < n; ++j)
                pb.grad[std::size_t(p) * n + j] +=
                    apv * self.grad[std::size_t(i) * n + j];
            }
        }
      });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](TensorNode& self) {
                          for (auto& p : self.parents) {
                            if (!p->requires_grad) continue;
                            p->ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              p->grad[i] += self.grad[i];
                          }
                        });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op_result(
      a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            pb.grad[i] -= self.grad[i];
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op_result(
      a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            pb.grad[i] += self.grad[i] * pa.value[i];
        }
      });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_op_result(a.shape(), std::move(out), {a},
                        [s](TensorNode& self) {
                          auto& pa = *self.parents[0];
                          if (!pa.requires_grad) return;
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            pa.grad[i] += self.grad[i] * s;
                        });
}

// out[r, :] = x[r, :] + bias
inline Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  detail::require_matrix(x, "add_rowwise input");
  detail::require(bias.shape().size() == 1 && bias.shape()[0] == x.shape()[1],
                  "add_rowwise: bias width must match input columns");
  const int r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(x.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[std::size_t(i) * c + j] = x.data()[std::size_t(i) * c + j] + bias.data()[j];
  return make_op_result(
      x.shape(), std::move(out), {x, bias}, [r, c](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pb = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              pb.grad[j] += self.grad[std::size_t(i) * c + j];
        }
      });
}

// out[r, :] = x[r, :] * factors[r]  (factors are structural constants)
inline Tensor scale_rows(const Tensor& x, std::vector<double> factors) {
  detail::require_matrix(x, "scale_rows input");
  detail::require(static_cast<int>(factors.size()) == x.shape()[0],
                  "scale_rows: one factor per row required");
  const int r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(x.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[std::size_t(i) * c + j] = x.data()[std::size_t(i) * c + j] * factors[i];
  return make_op_result(
      x.shape(), std::move(out), {x},
      [r, c, f = std::move(factors)](TensorNode& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            px.grad[std::size_t(i) * c + j] +=
                self.grad[std::size_t(i) * c + j] * f[i];
      });
}

inline Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return make_op_result(x.shape(), std::move(out), {x},
                        [](TensorNode& self) {
                          auto& px = *self.parents[0];
                          if (!px.requires_grad) return;
                          px.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const double y = self.value[i];
                            px.grad[i] += self.grad[i] * (1.0 - y * y);
                          }
                        });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return make_op_result(x.shape(), std::move(out), {x},
                        [](TensorNode& self) {
                          auto& px = *self.parents[0];
                          if (!px.requires_grad) return;
                          px.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            if (px.value[i] > 0.0) px.grad[i] += self.grad[i];
                        });
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op_result({1}, {s}, {x}, [](TensorNode& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < px.grad.size(); ++i)
      px.grad[i] += self.grad[0];
  });
}

// out[r, :] = x[indices[r], :]
inline Tensor gather_rows(const Tensor& x, std::vector<int> indices) {
  detail::require_matrix(x, "gather_rows input");
  const int c = x.shape()[1];
  const int xr = x.shape()[0];
  const int r = static_cast<int>(indices.size());
  std::vector<double> out(std::size_t(r) * c);
  for (int i = 0; i < r; ++i) {
    detail::require(indices[i] >= 0 && indices[i] < xr,
                    "gather_rows: index out of range");
    std::copy_n(&x.data()[std::size_t(indices[i]) * c], c,
                &out[std::size_t(i) * c]);
  }
  return make_op_result(
      {r, c}, std::move(out), {x},
      [c, idx = std::move(indices)](TensorNode& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (int j = 0; j < c; ++j)
            px.grad[std::size_t(idx[i]) * c + j] +=
                self.grad[i * c + j];
      });
}

// out[s, :] = sum over rows r with segments[r] == s of x[r, :]
inline Tensor segment_sum(const Tensor& x, std::vector<int> segments,
                          int n_segments) {
  detail::require_matrix(x, "segment_sum input");
  detail::require(static_cast<int>(segments.size()) == x.shape()[0],
                  "segment_sum: one segment id per row required");
  const int c = x.shape()[1];
  std::vector<double> out(std::size_t(n_segments) * c, 0.0);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    detail::require(segments[i] >= 0 && segments[i] < n_segments,
                    "segment_sum: segment id out of range");
    for (int j = 0; j < c; ++j)
      out[std::size_t(segments[i]) * c + j] += x.data()[i * c + j];
  }
  return make_op_result(
      {n_segments, c}, std::move(out), {x},
      [c, seg = std::move(segments)](TensorNode& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < seg.size(); ++i)
          for (int j = 0; j < c; ++j)
            px.grad[i * c + j] += self.grad[std::size_t(seg[i]) * c + j];
      });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_cols: empty input");
  const int r = parts[0].shape()[0];
  int total = 0;
  for (const Tensor& p : parts) {
    detail::require_matrix(p, "concat_cols part");
    detail::require(p.shape()[0] == r, "concat_cols: row counts differ");
    total += p.shape()[1];
  }
  std::vector<double> out(std::size_t(r) * total);
  std::vector<int> widths;
  int off = 0;
  for (const Tensor& p : parts) {
    const int c = p.shape()[1];
    widths.push_back(c);
    for (int i = 0; i < r; ++i)
      std::copy_n(&p.data()[std::size_t(i) * c], c,
                  &out[std::size_t(i) * total + off]);
    off += c;
  }
  return make_op_result(
      {r, total}, std::move(out), parts,
      [r, total, w = std::move(widths)](TensorNode& self) {
        int off2 = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& pp = *self.parents[p];
          const int c = w[p];
          if (pp.requires_grad) {
            pp.ensure_grad();
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < c; ++j)
                pp.grad[std::size_t(i) * c + j] +=
                    self.grad[std::size_t(i) * total + off2 + j];
          }
          off2 += c;
        }
      });
}

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  detail::require(detail::numel_of(new_shape) == x.numel(),
                  "reshape: element count must be preserved");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op_result(std::move(new_shape), std::move(out), {x},
                        [](TensorNode& self) {
                          auto& px = *self.parents[0];
                          if (!px.requires_grad) return;
                          px.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            px.grad[i] += self.grad[i];
                        });
}

}  // namespace modgnn
