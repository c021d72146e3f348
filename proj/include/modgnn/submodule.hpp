#pragma once

#include <memory>
#include <string>
#include <vector>

#include "modgnn/nn.hpp"
#include "modgnn/tensor.hpp"

namespace modgnn {

// A user-defined function slot in the node update / aggregation pipeline.
// Implementations operate row-wise on stacked inputs.
class Submodule {
 public:
  virtual ~Submodule() = default;
  virtual Tensor apply(const Tensor& rows) const = 0;
  virtual int out_width(int in_width) const = 0;
  virtual void collect_params(std::vector<NamedParam>& out,
                              const std::string& prefix) const = 0;
};

class IdentitySubmodule final : public Submodule {
 public:
  Tensor apply(const Tensor& rows) const override { return rows; }
  int out_width(int in_width) const override { return in_width; }
  void collect_params(std::vector<NamedParam>&,
                      const std::string&) const override {}
};

class MlpSubmodule final : public Submodule {
 public:
  explicit MlpSubmodule(MlpSpec spec) : net_(std::move(spec)) {}

  Tensor apply(const Tensor& rows) const override { return net_.forward(rows); }
  int out_width(int) const override { return net_.out_width(); }
  void collect_params(std::vector<NamedParam>& out,
                      const std::string& prefix) const override {
    net_.collect_params(out, prefix);
  }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

// Bias-free linear map (a graph convolution filter tap).
class LinearSubmodule final : public Submodule {
 public:
  LinearSubmodule(int in_width, int out_width, std::uint64_t seed) {
    const double bound = std::sqrt(1.0 / in_width);
    Rng rng(seed);
    std::vector<double> w(std::size_t(in_width) * out_width);
    for (double& v : w) v = rng.uniform(-bound, bound);
    tap_ = Tensor({in_width, out_width}, std::move(w), true);
  }

  Tensor apply(const Tensor& rows) const override { return matmul(rows, tap_); }
  int out_width(int) const override { return tap_.shape()[1]; }
  void collect_params(std::vector<NamedParam>& out,
                      const std::string& prefix) const override {
    out.emplace_back(prefix + ".tap", tap_);
  }
  const Tensor& tap() const { return tap_; }

 private:
  Tensor tap_;
};

class ActivationSubmodule final : public Submodule {
 public:
  explicit ActivationSubmodule(Activation a) : act_(a) {}
  Tensor apply(const Tensor& rows) const override {
    return apply_activation(rows, act_);
  }
  int out_width(int in_width) const override { return in_width; }
  void collect_params(std::vector<NamedParam>&,
                      const std::string&) const override {}

 private:
  Activation act_;
};

// f_input: maps the outputs of all previous layers to the vector that is
// compressed and transmitted.  `identity_concat` concatenates everything
// (for layer 1 that is just the raw observation); `select_last` masks out
// all but the newest layer output.
struct FInput {
  enum class Kind { identity_concat, select_last, mlp } kind = Kind::identity_concat;
  std::shared_ptr<MlpSubmodule> net;  // only for Kind::mlp

  static FInput identity_concat() { return {Kind::identity_concat, nullptr}; }
  static FInput select_last() { return {Kind::select_last, nullptr}; }
  static FInput mlp(MlpSpec spec) {
    return {Kind::mlp, std::make_shared<MlpSubmodule>(std::move(spec))};
  }
};

// c_i = f_input(x^(0..l-1)); prev_outputs[m] is the stacked [n x d_m]
// output of layer m, with layer 0 the raw observation.
inline Tensor apply_f_input(const FInput& f,
                            const std::vector<Tensor>& prev_outputs) {
  detail::require(!prev_outputs.empty(),
                  "apply_f_input: need at least the raw observation");
  switch (f.kind) {
    case FInput::Kind::select_last:
      return prev_outputs.back();
    case FInput::Kind::identity_concat:
      return prev_outputs.size() == 1 ? prev_outputs[0]
                                      : concat_cols(prev_outputs);
    case FInput::Kind::mlp: {
      Tensor in = prev_outputs.size() == 1 ? prev_outputs[0]
                                           : concat_cols(prev_outputs);
      return f.net->apply(in);
    }
  }
  throw std::invalid_argument("apply_f_input: unknown kind");
}

}  // namespace modgnn
