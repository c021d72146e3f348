#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "modgnn/checkpoint.hpp"
#include "modgnn/comm.hpp"
#include "modgnn/graph.hpp"
#include "modgnn/submodule.hpp"

namespace modgnn {

// The five user-defined functions of one layer.  f_pre / f_mid hold K+1
// entries; sharing parameters across hops is expressed by aliasing the
// same submodule instance.
struct SubmoduleSet {
  FInput f_input = FInput::identity_concat();
  CommRuleKind f_com = CommRuleKind::laplacian_difference;
  std::vector<std::shared_ptr<Submodule>> f_pre;
  std::vector<std::shared_ptr<Submodule>> f_mid;
  std::shared_ptr<Submodule> f_final;

  int hops() const { return static_cast<int>(f_pre.size()) - 1; }
};

// x_i = f_final( sum_k f_mid^(k)( sum_{z in Y_i^(k)} f_pre^(k)(z) ) )
// Empty inner sums contribute a zero vector, which still passes through
// f_mid (its bias keeps the hop channel alive).
inline Tensor node_update_stacked(const HopStacks& hs, const SubmoduleSet& s) {
  detail::require(static_cast<int>(s.f_pre.size()) == hs.K + 1 &&
                      static_cast<int>(s.f_mid.size()) == hs.K + 1,
                  "node_update: submodule count must be K+1");
  Tensor total;
  for (int k = 0; k <= hs.K; ++k) {
    Tensor pre = s.f_pre[k]->apply(hs.rows[k]);
    Tensor summed = segment_sum(pre, hs.seg[k], hs.n_agents);
    Tensor mid = s.f_mid[k]->apply(summed);
    total = k == 0 ? mid : add(total, mid);
  }
  return s.f_final->apply(total);
}

// Single-agent form on explicit k-hop sets (hop_sets[k] = list of vectors;
// hop 0 must be a singleton).  Used directly by tests and diagnostics.
inline std::vector<double> node_update(
    const std::vector<std::vector<std::vector<double>>>& hop_sets,
    const SubmoduleSet& s) {
  detail::require(!hop_sets.empty() && hop_sets[0].size() == 1,
                  "node_update: hop 0 must contain exactly the local vector");
  const int K = static_cast<int>(hop_sets.size()) - 1;
  const int width = static_cast<int>(hop_sets[0][0].size());
  HopStacks hs;
  hs.n_agents = 1;
  hs.K = K;
  hs.width = width;
  for (int k = 0; k <= K; ++k) {
    std::vector<double> flat;
    for (const auto& v : hop_sets[k]) {
      detail::require(static_cast<int>(v.size()) == width,
                      "node_update: inconsistent vector widths");
      flat.insert(flat.end(), v.begin(), v.end());
    }
    hs.rows.emplace_back(Shape{static_cast<int>(hop_sets[k].size()), width},
                         std::move(flat));
    hs.seg.emplace_back(hop_sets[k].size(), 0);
  }
  Tensor out = node_update_stacked(hs, s);
  return {out.data().begin(), out.data().end()};
}

inline std::vector<double> node_update(const NeighborhoodData& nd, int agent,
                                       const SubmoduleSet& s) {
  return node_update(nd.hops[agent], s);
}

enum class AggregationMode { centralized, delayed };

// One GNN layer: f_input, message aggregation in the chosen mode, node
// update.  prev_outputs holds the stacked outputs of layers 0..l-1 with
// layer 0 the raw observation.
inline Tensor forward_layer(const SubmoduleSet& s,
                            const std::vector<Tensor>& prev_outputs,
                            const EdgeList& edges, AggregationMode mode,
                            DelayCache* cache = nullptr) {
  Tensor c = apply_f_input(s.f_input, prev_outputs);
  HopStacks hs;
  if (mode == AggregationMode::centralized) {
    hs = aggregate_khop_stacked(c, edges, s.hops(), s.f_com);
  } else {
    detail::require(cache != nullptr, "delayed mode requires a DelayCache");
    hs = message_step_delayed_stacked(*cache, c, edges, s.f_com);
  }
  return node_update_stacked(hs, s);
}

// Direct dense evaluation of the graph convolution
//   sigma( sum_k S^k X A_k )
inline Tensor gcn_forward(const Tensor& x, const Gso& gso,
                          const std::vector<Tensor>& filter_taps,
                          Activation activation) {
  detail::require_matrix(x, "gcn_forward input");
  detail::require(x.shape()[0] == gso.n, "gcn_forward: GSO size mismatch");
  detail::require(!filter_taps.empty(), "gcn_forward: need at least A_0");
  const int out_width = filter_taps[0].shape()[1];
  for (const Tensor& a : filter_taps)
    detail::require(a.shape()[1] == out_width,
                    "gcn_forward: tap widths must be uniform");
  Tensor shift({gso.n, gso.n}, gso.matrix);
  Tensor shifted = x;
  Tensor acc;
  for (std::size_t k = 0; k < filter_taps.size(); ++k) {
    if (k > 0) shifted = matmul(shift, shifted);
    Tensor term = matmul(shifted, filter_taps[k]);
    acc = k == 0 ? term : add(acc, term);
  }
  return apply_activation(acc, activation);
}

// ---------------------------------------------------------------------------
// model zoo
// ---------------------------------------------------------------------------

enum class Variant {
  modgnn_mlp,
  modgnn_mlp_no_fpre,
  modgnn_mlp_no_fmid,
  gcn,
  gcn_ffinal,
  central,
};

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::modgnn_mlp: return "modgnn_mlp";
    case Variant::modgnn_mlp_no_fpre: return "modgnn_mlp_no_fpre";
    case Variant::modgnn_mlp_no_fmid: return "modgnn_mlp_no_fmid";
    case Variant::gcn: return "gcn";
    case Variant::gcn_ffinal: return "gcn_ffinal";
    case Variant::central: return "central";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::modgnn_mlp, Variant::modgnn_mlp_no_fpre,
                    Variant::modgnn_mlp_no_fmid, Variant::gcn,
                    Variant::gcn_ffinal, Variant::central}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown model variant: " + s);
}

inline bool is_decentralized(Variant v) { return v != Variant::central; }

struct ModelConfig {
  Variant variant = Variant::modgnn_mlp;
  int K = 2;
  int L = 1;
  int obs_dim = 6;
  int action_dim = 3;
  int hidden_width = 32;  // hidden width of every internal MLP
  int inner_width = 10;   // f_pre / f_mid output width
  int n_agents = 8;       // fixed swarm size; only the central variant uses it
  bool share_hop_params = false;
  CommRuleKind comm = CommRuleKind::laplacian_difference;
  Activation activation = Activation::tanh;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"K", c.K},
          {"L", c.L},
          {"obs_dim", c.obs_dim},
          {"action_dim", c.action_dim},
          {"hidden_width", c.hidden_width},
          {"inner_width", c.inner_width},
          {"n_agents", c.n_agents},
          {"share_hop_params", c.share_hop_params},
          {"comm", to_string(c.comm)},
          {"activation", to_string(c.activation)},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.K = j.at("K").get<int>();
  c.L = j.at("L").get<int>();
  c.obs_dim = j.at("obs_dim").get<int>();
  c.action_dim = j.at("action_dim").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.inner_width = j.at("inner_width").get<int>();
  c.n_agents = j.at("n_agents").get<int>();
  c.share_hop_params = j.at("share_hop_params").get<bool>();
  c.comm = j.at("comm").get<std::string>() == "identity"
               ? CommRuleKind::identity
               : CommRuleKind::laplacian_difference;
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// A batch of frames stacked into one block-diagonal graph.  Agent indices
// in `edges` are global (frame offset applied); `loss_mask` is 1 for rows
// that count toward the imitation loss (followers).
struct FrameBatch {
  int n_frames = 0;
  std::vector<int> agent_offset;  // size n_frames + 1
  Tensor obs;                     // [total_agents x obs_dim]
  EdgeList edges;
  std::vector<std::uint8_t> loss_mask;

  int total_agents() const { return agent_offset.empty() ? 0 : agent_offset.back(); }
  int agents_in_frame(int f) const {
    return agent_offset[f + 1] - agent_offset[f];
  }
};

// Per-layer delayed-communication caches for closed-loop evaluation.
struct DelayState {
  std::vector<DelayCache> per_layer;

  void reset(int n_agents, const std::vector<int>& layer_hops) {
    per_layer.assign(layer_hops.size(), DelayCache());
    for (std::size_t l = 0; l < layer_hops.size(); ++l)
      per_layer[l].reset(n_agents, layer_hops[l]);
  }
};

class Model {
 public:
  Model() = default;

  ModelConfig cfg;
  std::vector<SubmoduleSet> layers;  // decentralized variants, size L
  std::unique_ptr<Mlp> central_net;  // central variant

  // Width of x^(l) for l = 0..L (layer 0 is the raw observation).
  std::vector<int> layer_widths;

  bool is_central() const { return cfg.variant == Variant::central; }

  // Forward over a stacked batch of frames (centralized aggregation).
  Tensor forward_batch(const FrameBatch& fb) const {
    if (is_central()) return central_forward(fb);
    std::vector<Tensor> outputs = {fb.obs};
    for (const SubmoduleSet& s : layers) {
      outputs.push_back(forward_layer(s, outputs, fb.edges,
                                      AggregationMode::centralized));
    }
    return outputs.back();
  }

  // Single frame; graph given explicitly.  The central variant ignores the
  // graph but requires the configured agent count.
  Tensor forward_frame(const Tensor& obs, const CommGraph& g) const {
    FrameBatch fb = single_frame_batch(obs, g);
    return forward_batch(fb);
  }

  // Single frame in delayed-communication mode: exactly one exchange round
  // per call, per layer.
  Tensor forward_frame_delayed(const Tensor& obs, const CommGraph& g,
                               DelayState& ds) const {
    detail::require(!is_central(),
                    "delayed mode applies to decentralized variants only");
    detail::require(ds.per_layer.size() == layers.size(),
                    "delay state layer count mismatch");
    EdgeList edges = edges_of(g);
    std::vector<Tensor> outputs = {obs};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      outputs.push_back(forward_layer(layers[l], outputs, edges,
                                      AggregationMode::delayed,
                                      &ds.per_layer[l]));
    }
    return outputs.back();
  }

  DelayState make_delay_state(int n_agents) const {
    std::vector<int> hops;
    for (const auto& s : layers) hops.push_back(s.hops());
    DelayState ds;
    ds.reset(n_agents, hops);
    return ds;
  }

  FrameBatch single_frame_batch(const Tensor& obs, const CommGraph& g) const {
    detail::require(obs.shape().size() == 2 && obs.shape()[1] == cfg.obs_dim,
                    "model forward: observation width mismatch");
    detail::require(obs.shape()[0] == g.n_agents,
                    "model forward: observation rows must match agent count");
    FrameBatch fb;
    fb.n_frames = 1;
    fb.agent_offset = {0, g.n_agents};
    fb.obs = obs;
    fb.edges = edges_of(g);
    fb.loss_mask.assign(g.n_agents, 1);
    return fb;
  }

  std::vector<NamedParam> named_params() const {
    std::vector<NamedParam> out;
    if (is_central()) {
      central_net->collect_params(out, "net");
      return out;
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string lp = "layer" + std::to_string(l + 1);
      const SubmoduleSet& s = layers[l];
      if (s.f_input.kind == FInput::Kind::mlp)
        s.f_input.net->collect_params(out, lp + ".f_input");
      collect_hop_params(out, s.f_pre, lp + ".f_pre");
      collect_hop_params(out, s.f_mid, lp + ".f_mid");
      s.f_final->collect_params(out, lp + ".f_final");
    }
    return out;
  }

  std::vector<Tensor> param_tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.numel();
    return n;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.model_variant = to_string(cfg.variant);
    c.K = cfg.K;
    c.L = cfg.L;
    c.seed = cfg.seed;
    c.extra["model_config"] = to_json(cfg);
    for (const auto& [name, t] : named_params()) {
      c.params.push_back(
          {name, t.shape(), {t.data().begin(), t.data().end()}});
    }
    return c;
  }

  void load_params(const Checkpoint& c) {
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : named_params()) by_name.emplace(name, t);
    detail::require(by_name.size() == c.params.size(),
                    "checkpoint parameter count mismatch");
    for (const auto& rec : c.params) {
      auto it = by_name.find(rec.name);
      detail::require(it != by_name.end(),
                      "checkpoint has unknown parameter " + rec.name);
      detail::require(it->second.shape() == rec.shape,
                      "checkpoint parameter " + rec.name + " shape mismatch");
      std::copy(rec.values.begin(), rec.values.end(),
                it->second.data().begin());
    }
  }

 private:
  static void collect_hop_params(
      std::vector<NamedParam>& out,
      const std::vector<std::shared_ptr<Submodule>>& subs,
      const std::string& prefix) {
    if (subs.empty()) return;
    const bool shared =
        std::all_of(subs.begin(), subs.end(),
                    [&](const auto& s) { return s == subs.front(); });
    if (shared) {
      subs.front()->collect_params(out, prefix + ".shared");
      return;
    }
    for (std::size_t k = 0; k < subs.size(); ++k)
      subs[k]->collect_params(out, prefix + ".k" + std::to_string(k));
  }

  Tensor central_forward(const FrameBatch& fb) const {
    for (int f = 0; f < fb.n_frames; ++f) {
      detail::require(fb.agents_in_frame(f) == cfg.n_agents,
                      "central variant is fixed to n_agents=" +
                          std::to_string(cfg.n_agents) +
                          ", got a frame with " +
                          std::to_string(fb.agents_in_frame(f)));
    }
    Tensor flat = reshape(fb.obs, {fb.n_frames, cfg.n_agents * cfg.obs_dim});
    Tensor acts = central_net->forward(flat);
    return reshape(acts, {fb.total_agents(), cfg.action_dim});
  }
};

// ---------------------------------------------------------------------------
// build_model: variant wiring
// ---------------------------------------------------------------------------

namespace detail {

inline std::shared_ptr<Submodule> make_mlp_submodule(int in, int hidden,
                                                     int out, Activation act,
                                                     std::uint64_t seed) {
  return std::make_shared<MlpSubmodule>(
      MlpSpec{{in, hidden, hidden, out}, act, seed});
}

}  // namespace detail

// Wire one layer of the requested variant.  d_in is the f_input output
// width, d_out the layer output width.
inline SubmoduleSet build_layer(const ModelConfig& cfg, int layer_index,
                                int d_in, int d_out) {
  const std::string tag = "layer" + std::to_string(layer_index);
  auto seed_for = [&](const std::string& role, int k) {
    return seeds::derive(cfg.seed, tag + "." + role, std::uint64_t(k));
  };

  SubmoduleSet s;
  s.f_com = cfg.comm;
  s.f_input = is_decentralized(cfg.variant) &&
                      (cfg.variant == Variant::gcn ||
                       cfg.variant == Variant::gcn_ffinal)
                  ? FInput::select_last()
                  : FInput::identity_concat();

  const int n_hops = cfg.K + 1;
  s.f_pre.resize(n_hops);
  s.f_mid.resize(n_hops);
  auto fill_hops = [&](std::vector<std::shared_ptr<Submodule>>& slot,
                       const std::string& role, auto maker) {
    if (cfg.share_hop_params) {
      auto one = maker(seed_for(role, 0));
      std::fill(slot.begin(), slot.end(), one);
    } else {
      for (int k = 0; k < n_hops; ++k) slot[k] = maker(seed_for(role, k));
    }
  };

  switch (cfg.variant) {
    case Variant::modgnn_mlp:
      fill_hops(s.f_pre, "f_pre", [&](std::uint64_t sd) {
        return detail::make_mlp_submodule(d_in, cfg.hidden_width,
                                          cfg.inner_width, cfg.activation, sd);
      });
      fill_hops(s.f_mid, "f_mid", [&](std::uint64_t sd) {
        return detail::make_mlp_submodule(cfg.inner_width, cfg.hidden_width,
                                          cfg.inner_width, cfg.activation, sd);
      });
      s.f_final = detail::make_mlp_submodule(cfg.inner_width, cfg.hidden_width,
                                             d_out, cfg.activation,
                                             seed_for("f_final", 0));
      break;
    case Variant::modgnn_mlp_no_fpre:
      fill_hops(s.f_pre, "f_pre", [&](std::uint64_t) {
        return std::make_shared<IdentitySubmodule>();
      });
      fill_hops(s.f_mid, "f_mid", [&](std::uint64_t sd) {
        return detail::make_mlp_submodule(d_in, cfg.hidden_width,
                                          cfg.inner_width, cfg.activation, sd);
      });
      s.f_final = detail::make_mlp_submodule(cfg.inner_width, cfg.hidden_width,
                                             d_out, cfg.activation,
                                             seed_for("f_final", 0));
      break;
    case Variant::modgnn_mlp_no_fmid:
      fill_hops(s.f_pre, "f_pre", [&](std::uint64_t sd) {
        return detail::make_mlp_submodule(d_in, cfg.hidden_width,
                                          cfg.inner_width, cfg.activation, sd);
      });
      fill_hops(s.f_mid, "f_mid", [&](std::uint64_t) {
        return std::make_shared<IdentitySubmodule>();
      });
      s.f_final = detail::make_mlp_submodule(cfg.inner_width, cfg.hidden_width,
                                             d_out, cfg.activation,
                                             seed_for("f_final", 0));
      break;
    case Variant::gcn:
      fill_hops(s.f_pre, "f_pre", [&](std::uint64_t) {
        return std::make_shared<IdentitySubmodule>();
      });
      fill_hops(s.f_mid, "f_mid", [&](std::uint64_t sd) {
        return std::make_shared<LinearSubmodule>(d_in, d_out, sd);
      });
      s.f_final = std::make_shared<ActivationSubmodule>(cfg.activation);
      break;
    case Variant::gcn_ffinal:
      fill_hops(s.f_pre, "f_pre", [&](std::uint64_t) {
        return std::make_shared<IdentitySubmodule>();
      });
      fill_hops(s.f_mid, "f_mid", [&](std::uint64_t sd) {
        return std::make_shared<LinearSubmodule>(d_in, cfg.inner_width, sd);
      });
      s.f_final = detail::make_mlp_submodule(cfg.inner_width, cfg.hidden_width,
                                             d_out, cfg.activation,
                                             seed_for("f_final", 0));
      break;
    case Variant::central:
      throw std::invalid_argument("central variant has no layer submodules");
  }
  return s;
}

inline Model build_model(const ModelConfig& cfg) {
  detail::require(cfg.K >= 0, "build_model: K must be nonnegative");
  detail::require(cfg.L >= 1, "build_model: L must be at least 1");
  detail::require(cfg.obs_dim > 0 && cfg.action_dim > 0,
                  "build_model: observation/action widths must be positive");
  Model m;
  m.cfg = cfg;
  m.layer_widths = {cfg.obs_dim};

  if (cfg.variant == Variant::central) {
    // 4 affine layers on the concatenated swarm state
    m.central_net = std::make_unique<Mlp>(MlpSpec{
        {cfg.n_agents * cfg.obs_dim, cfg.hidden_width, cfg.hidden_width,
         cfg.hidden_width, cfg.n_agents * cfg.action_dim},
        cfg.activation,
        seeds::derive(cfg.seed, "central")});
    m.layer_widths.push_back(cfg.action_dim);
    return m;
  }

  for (int l = 1; l <= cfg.L; ++l) {
    const bool concat_inputs = cfg.variant != Variant::gcn &&
                               cfg.variant != Variant::gcn_ffinal;
    int d_in = 0;
    if (concat_inputs) {
      for (int w : m.layer_widths) d_in += w;
    } else {
      d_in = m.layer_widths.back();
    }
    const int d_out = l == cfg.L ? cfg.action_dim : cfg.inner_width;
    m.layers.push_back(build_layer(cfg, l, d_in, d_out));
    m.layer_widths.push_back(d_out);
  }
  return m;
}

inline Model model_from_checkpoint(const Checkpoint& c) {
  detail::require(c.extra.contains("model_config"),
                  "checkpoint lacks an embedded model_config");
  Model m = build_model(model_config_from_json(c.extra.at("model_config")));
  m.load_params(c);
  return m;
}

}  // namespace modgnn
