#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "modgnn/rng.hpp"
#include "modgnn/tensor.hpp"

namespace modgnn {

enum class Activation { relu, tanh, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation: " + s);
}

inline Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::identity: return x;
  }
  throw std::invalid_argument("unknown activation");
}

// layer_widths = [in, hidden..., out]; one weight matrix per adjacent pair.
// "Three layer" MLP == 3 weight matrices == layer_widths of length 4.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::tanh;
  std::uint64_t seed = 0;
};

using NamedParam = std::pair<std::string, Tensor>;

// Affine chain with the activation after every layer except the last.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    detail::require(spec_.layer_widths.size() >= 2,
                    "MlpSpec needs at least [in, out] widths");
    for (int w : spec_.layer_widths)
      detail::require(w > 0, "MlpSpec widths must be positive");
    const auto& w = spec_.layer_widths;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const int fan_in = w[l], fan_out = w[l + 1];
      const double bound = std::sqrt(1.0 / fan_in);
      Rng rng(seeds::derive(spec_.seed, "mlp_layer", l));
      std::vector<double> wm(std::size_t(fan_in) * fan_out);
      for (double& v : wm) v = rng.uniform(-bound, bound);
      std::vector<double> bm(fan_out);
      for (double& v : bm) v = rng.uniform(-bound, bound);
      weights_.emplace_back(Shape{fan_in, fan_out}, std::move(wm), true);
      biases_.emplace_back(Shape{fan_out}, std::move(bm), true);
    }
  }

  const MlpSpec& spec() const { return spec_; }
  int in_width() const { return spec_.layer_widths.front(); }
  int out_width() const { return spec_.layer_widths.back(); }
  std::size_t n_layers() const { return weights_.size(); }

  // x: [rows x in] -> [rows x out]
  Tensor forward(const Tensor& x) const {
    detail::require(x.shape().size() == 2 && x.shape()[1] == in_width(),
                    "mlp forward: input width " +
                        std::to_string(x.shape().size() == 2 ? x.shape()[1] : -1) +
                        " does not match spec width " +
                        std::to_string(in_width()));
    Tensor h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = add_rowwise(matmul(h, weights_[l]), biases_[l]);
      if (l + 1 < weights_.size()) h = apply_activation(h, spec_.activation);
    }
    return h;
  }

  void collect_params(std::vector<NamedParam>& out,
                      const std::string& prefix) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.emplace_back(prefix + ".w" + std::to_string(l), weights_[l]);
      out.emplace_back(prefix + ".b" + std::to_string(l), biases_[l]);
    }
  }

  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }

 private:
  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Free-function form of the forward pass: params alternate W0, b0, W1, b1, ...
inline Tensor mlp_forward(const MlpSpec& spec, const std::vector<Tensor>& params,
                          const Tensor& x) {
  detail::require(params.size() == 2 * (spec.layer_widths.size() - 1),
                  "mlp_forward: wrong parameter count for spec");
  detail::require(x.shape().size() == 2 && x.shape()[1] == spec.layer_widths[0],
                  "mlp_forward: input width does not match spec");
  Tensor h = x;
  const std::size_t n_layers = spec.layer_widths.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = add_rowwise(matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < n_layers) h = apply_activation(h, spec.activation);
  }
  return h;
}

// ---------------------------------------------------------------------------
// adaptive-moment optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  AdamConfig cfg;
  long step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  explicit OptimState(AdamConfig c = {}) : cfg(c) {}
};

// One update over all parameters, reading Tensor::grad().  Moments are
// created lazily and shape-checked against their parameters.
inline void optim_step(OptimState& state, std::vector<Tensor>& params) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].numel(), 0.0);
      state.second_moment[i].assign(params[i].numel(), 0.0);
    }
  }
  detail::require(state.first_moment.size() == params.size(),
                  "optim_step: state/parameter count mismatch");
  state.step_count += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, double(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, double(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    detail::require(state.first_moment[i].size() == p.numel(),
                    "optim_step: moment/parameter shape mismatch");
    if (!p.has_grad()) continue;  // parameter untouched by the last backward
    auto g = p.grad();
    auto v = p.data();
    auto& m1 = state.first_moment[i];
    auto& m2 = state.second_moment[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      m1[j] = b1 * m1[j] + (1.0 - b1) * g[j];
      m2[j] = b2 * m2[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m1[j] / corr1;
      const double vhat = m2[j] / corr2;
      v[j] -= state.cfg.learning_rate * mhat /
              (std::sqrt(vhat) + state.cfg.epsilon);
    }
  }
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace modgnn
