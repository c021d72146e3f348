#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "modgnn/model.hpp"
#include "modgnn/rng.hpp"

using namespace modgnn;

namespace {

struct NegationSubmodule final : Submodule {
  Tensor apply(const Tensor& rows) const override { return scale(rows, -1.0); }
  int out_width(int in_width) const override { return in_width; }
  void collect_params(std::vector<NamedParam>&,
                      const std::string&) const override {}
};

SubmoduleSet identity_set(int K) {
  SubmoduleSet s;
  s.f_com = CommRuleKind::identity;
  for (int k = 0; k <= K; ++k) {
    s.f_pre.push_back(std::make_shared<IdentitySubmodule>());
    s.f_mid.push_back(std::make_shared<IdentitySubmodule>());
  }
  s.f_final = std::make_shared<IdentitySubmodule>();
  return s;
}

Tensor random_obs(int n, int d, Rng& rng) {
  std::vector<double> v(std::size_t(n) * d);
  for (double& x : v) x = rng.uniform(-2, 2);
  return Tensor({n, d}, std::move(v));
}

CommGraph random_graph(int n, Rng& rng, double p = 0.5) {
  CommGraph g(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) g.set_edge(i, j);
  return g;
}

// --- scalar reference machinery (independent of the Tensor path) -----------

using Matrix = std::vector<std::vector<double>>;

Matrix gso_matrix(const CommGraph& g, CommRuleKind rule) {
  const Gso s = make_gso(g, gso_kind_for(rule));
  Matrix m(s.n, std::vector<double>(s.n));
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) m[i][j] = s.at(i, j);
  return m;
}

std::vector<double> scalar_mlp(
    const std::map<std::string, ParamRecord>& params, const std::string& prefix,
    Activation act, std::vector<double> x) {
  for (int l = 0;; ++l) {
    const auto wi = params.find(prefix + ".w" + std::to_string(l));
    if (wi == params.end()) break;
    const auto& w = wi->second;
    const auto& b = params.at(prefix + ".b" + std::to_string(l));
    const int in = w.shape[0], out = w.shape[1];
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
      double acc = b.values[o];
      for (int i = 0; i < in; ++i) acc += x[i] * w.values[std::size_t(i) * out + o];
      y[o] = acc;
    }
    const bool last =
        params.find(prefix + ".w" + std::to_string(l + 1)) == params.end();
    if (!last)
      for (double& v : y)
        v = act == Activation::tanh ? std::tanh(v)
                                    : (act == Activation::relu ? std::max(0.0, v)
                                                               : v);
    x = std::move(y);
  }
  return x;
}

// loop-based reference of the whole decentralized forward pass
std::vector<std::vector<double>> scalar_modgnn_forward(
    const Model& model, const Tensor& obs, const CommGraph& g) {
  const ModelConfig& cfg = model.cfg;
  const int n = g.n_agents;
  std::map<std::string, ParamRecord> params;
  for (const auto& p : model.to_checkpoint().params) params.emplace(p.name, p);

  // hop aggregates m^k = S^k c and per-sender messages
  Matrix s = gso_matrix(g, cfg.comm);
  std::vector<Matrix> m(cfg.K + 1,
                        Matrix(n, std::vector<double>(cfg.obs_dim)));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < cfg.obs_dim; ++c)
      m[0][i][c] = obs.data()[std::size_t(i) * cfg.obs_dim + c];
  for (int k = 1; k <= cfg.K; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int c = 0; c < cfg.obs_dim; ++c)
          m[k][i][c] += s[i][j] * m[k - 1][j][c];

  std::vector<std::vector<double>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> total;
    for (int k = 0; k <= cfg.K; ++k) {
      // gather the hop-k set for agent i
      std::vector<std::vector<double>> set;
      if (k == 0) {
        set.push_back(m[0][i]);
      } else {
        for (int j = 0; j < n; ++j) {
          if (!g.edge(i, j)) continue;
          std::vector<double> y(cfg.obs_dim);
          for (int c = 0; c < cfg.obs_dim; ++c)
            y[c] = cfg.comm == CommRuleKind::identity
                       ? m[k - 1][j][c]
                       : m[k - 1][i][c] - m[k - 1][j][c];
          set.push_back(std::move(y));
        }
      }
      const std::string kp = ".k" + std::to_string(k);
      std::vector<double> inner(cfg.inner_width, 0.0);
      for (const auto& z : set) {
        const auto p = scalar_mlp(params, "layer1.f_pre" + kp,
                                  cfg.activation, z);
        for (std::size_t c = 0; c < p.size(); ++c) inner[c] += p[c];
      }
      const auto mid =
          scalar_mlp(params, "layer1.f_mid" + kp, cfg.activation, inner);
      if (total.empty()) total.assign(mid.size(), 0.0);
      for (std::size_t c = 0; c < mid.size(); ++c) total[c] += mid[c];
    }
    out[i] = scalar_mlp(params, "layer1.f_final", cfg.activation, total);
  }
  return out;
}

}  // namespace

TEST_CASE("node_update with identity submodules sums all vectors") {
  SubmoduleSet s = identity_set(1);
  const auto out = node_update({{{1.0, 2.0}}, {{0.5, -1.0}, {2.0, 3.0}}}, s);
  REQUIRE(out[0] == Catch::Approx(3.5));
  REQUIRE(out[1] == Catch::Approx(4.0));
}

TEST_CASE("node_update with negating f_pre kills a zero-sum set") {
  SubmoduleSet s = identity_set(1);
  s.f_pre[0] = std::make_shared<NegationSubmodule>();
  s.f_pre[1] = std::make_shared<NegationSubmodule>();
  const auto out = node_update(
      {{{0.0, 0.0}}, {{-2.0, 0.0}, {1.0, 1.0}, {1.0, -1.0}}}, s);
  REQUIRE(out[0] == 0.0);
  REQUIRE(out[1] == 0.0);
}

TEST_CASE("node_update treats empty hop sets as zero vectors") {
  SubmoduleSet s = identity_set(2);
  const auto out = node_update({{{4.0}}, {}, {}}, s);
  REQUIRE(out[0] == 4.0);
}

TEST_CASE("node_update rejects a bad width chain") {
  SubmoduleSet s = identity_set(0);
  s.f_final = std::make_shared<MlpSubmodule>(MlpSpec{{5, 3}, Activation::tanh, 0});
  REQUIRE_THROWS_AS(node_update({{{1.0, 2.0}}}, s), std::invalid_argument);
}

TEST_CASE("forward_layer with identity wiring on an edgeless graph is the identity") {
  SubmoduleSet s = identity_set(2);
  Rng rng(5);
  Tensor obs = random_obs(4, 3, rng);
  EdgeList e = edges_of(CommGraph(4));
  Tensor out = forward_layer(s, {obs}, e, AggregationMode::centralized);
  for (std::size_t i = 0; i < obs.numel(); ++i)
    REQUIRE(out.data()[i] == obs.data()[i]);
}

TEST_CASE("gcn_forward with K=0 and identity tap is the identity") {
  Rng rng(7);
  Tensor x = random_obs(4, 3, rng);
  CommGraph g = random_graph(4, rng);
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  Tensor out = gcn_forward(x, laplacian_gso(g), {Tensor({3, 3}, eye)},
                           Activation::identity);
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(out.data()[i] == x.data()[i]);
}

TEST_CASE("gcn_forward of zero input is sigma(0)") {
  CommGraph g = full_graph(3);
  Tensor x = Tensor::zeros({3, 2});
  Tensor a({2, 2}, {0.3, -0.1, 0.2, 0.9});
  Tensor out = gcn_forward(x, adjacency_gso(g), {a, a}, Activation::tanh);
  for (double v : out.data()) REQUIRE(v == 0.0);
}

TEST_CASE("gcn model equals the direct dense graph convolution") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    ModelConfig cfg;
    cfg.variant = Variant::gcn;
    cfg.K = 1 + int(rng.below(3));
    cfg.obs_dim = 2 + int(rng.below(3));
    cfg.action_dim = 1 + int(rng.below(3));
    cfg.comm = trial % 2 ? CommRuleKind::identity
                         : CommRuleKind::laplacian_difference;
    cfg.seed = rng.below(1u << 30);
    Model m = build_model(cfg);

    const int n = 3 + int(rng.below(5));
    cfg.n_agents = n;
    CommGraph g = random_graph(n, rng);
    Tensor x = random_obs(n, cfg.obs_dim, rng);

    std::vector<Tensor> taps;
    for (int k = 0; k <= cfg.K; ++k) {
      for (const auto& [name, t] : m.named_params()) {
        if (name == "layer1.f_mid.k" + std::to_string(k) + ".tap")
          taps.push_back(t);
      }
    }
    REQUIRE(int(taps.size()) == cfg.K + 1);

    Tensor direct = gcn_forward(x, make_gso(g, gso_kind_for(cfg.comm)), taps,
                                cfg.activation);
    Tensor wired = m.forward_frame(x, g);
    for (std::size_t i = 0; i < direct.numel(); ++i)
      REQUIRE(std::abs(direct.data()[i] - wired.data()[i]) < 1e-10);
  }
}

TEST_CASE("modgnn_mlp parameter count matches the closed form") {
  ModelConfig cfg;
  cfg.variant = Variant::modgnn_mlp;
  cfg.K = 2;
  Model m = build_model(cfg);
  auto mlp_params = [](std::vector<int> w) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
      n += std::size_t(w[l]) * w[l + 1] + w[l + 1];
    return n;
  };
  const int h = cfg.hidden_width, in = cfg.inner_width;
  const std::size_t expect =
      3 * mlp_params({cfg.obs_dim, h, h, in}) +  // f_pre, per hop
      3 * mlp_params({in, h, h, in}) +           // f_mid, per hop
      mlp_params({in, h, h, cfg.action_dim});    // f_final
  REQUIRE(m.parameter_count() == expect);
}

TEST_CASE("ablation without f_pre differs exactly by the f_pre parameters") {
  ModelConfig a;
  a.variant = Variant::modgnn_mlp;
  ModelConfig b = a;
  b.variant = Variant::modgnn_mlp_no_fpre;
  auto names = [](const Model& m) {
    std::vector<std::string> out;
    for (const auto& [n, t] : m.named_params()) out.push_back(n);
    return out;
  };
  auto an = names(build_model(a)), bn = names(build_model(b));
  std::vector<std::string> a_only;
  for (const auto& n : an)
    if (std::find(bn.begin(), bn.end(), n) == bn.end()) a_only.push_back(n);
  REQUIRE_FALSE(a_only.empty());
  for (const auto& n : a_only) REQUIRE(n.find(".f_pre.") != std::string::npos);
  for (const auto& n : bn)
    REQUIRE(std::find(an.begin(), an.end(), n) != an.end());
}

TEST_CASE("central model at N=32 has input width 192 and output width 96") {
  ModelConfig cfg;
  cfg.variant = Variant::central;
  cfg.n_agents = 32;
  Model m = build_model(cfg);
  REQUIRE(m.central_net->in_width() == 192);
  REQUIRE(m.central_net->out_width() == 96);
  REQUIRE(m.central_net->n_layers() == 4);
}

TEST_CASE("zeroed parameters produce zero actions") {
  for (Variant v : {Variant::modgnn_mlp, Variant::gcn, Variant::central}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.K = 1;
    cfg.n_agents = 4;
    Model m = build_model(cfg);
    for (auto& [name, t] : m.named_params())
      for (double& x : t.data()) x = 0.0;
    Rng rng(3);
    Tensor obs = random_obs(4, 6, rng);
    Tensor out = m.forward_frame(obs, random_graph(4, rng));
    for (double x : out.data()) REQUIRE(x == 0.0);
  }
}

TEST_CASE("mirroring the swarm through the origin negates laplacian aggregates") {
  Rng rng(13);
  const int n = 5;
  CommGraph g = random_graph(n, rng, 0.8);
  Tensor obs = random_obs(n, 6, rng);
  std::vector<double> neg(obs.data().begin(), obs.data().end());
  for (double& v : neg) v = -v;
  auto nd1 = aggregate_khop_centralized(obs, g, 2,
                                        CommRuleKind::laplacian_difference);
  auto nd2 = aggregate_khop_centralized(Tensor({n, 6}, neg), g, 2,
                                        CommRuleKind::laplacian_difference);
  for (int i = 0; i < n; ++i)
    for (int k = 1; k <= 2; ++k)
      for (std::size_t v = 0; v < nd1.set(i, k).size(); ++v)
        for (int c = 0; c < 6; ++c)
          REQUIRE(nd1.set(i, k)[v][c] == -nd2.set(i, k)[v][c]);
}

TEST_CASE("equal-sum neighbor sets: identity f_pre collapses, mlp f_pre distinguishes") {
  // the two sets both sum to [0,0]
  const std::vector<std::vector<double>> set_a = {{-2, 0}, {1, 1}, {1, -1}};
  std::vector<std::vector<double>> set_b;
  for (auto v : set_a) {
    for (double& x : v) x = -x;
    set_b.push_back(v);
  }

  int distinguished = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelConfig cfg;
    cfg.variant = Variant::modgnn_mlp;
    cfg.K = 1;
    cfg.obs_dim = 2;
    cfg.action_dim = 2;
    cfg.seed = seed;
    Model mlp_model = build_model(cfg);
    cfg.variant = Variant::modgnn_mlp_no_fpre;
    Model nofpre_model = build_model(cfg);
    cfg.variant = Variant::gcn;
    Model gcn_model = build_model(cfg);

    const std::vector<std::vector<double>> hop0 = {{0.0, 0.0}};
    auto diff = [&](const Model& m) {
      const auto a = node_update({hop0, set_a}, m.layers[0]);
      const auto b = node_update({hop0, set_b}, m.layers[0]);
      double d = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a[i] - b[i]));
      return d;
    };
    if (diff(mlp_model) > 1e-6) ++distinguished;
    REQUIRE(diff(nofpre_model) < 1e-12);
    REQUIRE(diff(gcn_model) < 1e-12);
  }
  REQUIRE(distinguished >= 9);
}

TEST_CASE("node_update sees each hop set only through its f_pre sum") {
  ModelConfig cfg;
  cfg.variant = Variant::modgnn_mlp;
  cfg.K = 1;
  cfg.obs_dim = 3;
  cfg.seed = 99;
  Model m = build_model(cfg);
  const std::vector<double> a{0.4, -1.0, 2.0}, b{1.5, 0.3, -0.2},
      c{-0.7, 0.9, 0.1};

  // permuting the multiset leaves the output unchanged
  const auto out1 = node_update({{a}, {b, c}}, m.layers[0]);
  const auto out2 = node_update({{a}, {c, b}}, m.layers[0]);
  for (std::size_t i = 0; i < out1.size(); ++i)
    REQUIRE(out1[i] == Catch::Approx(out2[i]).margin(1e-12));

  // identity f_pre: splitting one vector into two with the same sum
  cfg.variant = Variant::modgnn_mlp_no_fpre;
  Model id_model = build_model(cfg);
  std::vector<double> b_half = b, b_rest = b;
  for (double& x : b_half) x *= 0.25;
  for (double& x : b_rest) x *= 0.75;
  const auto w1 = node_update({{a}, {b, c}}, id_model.layers[0]);
  const auto w2 = node_update({{a}, {b_half, b_rest, c}}, id_model.layers[0]);
  for (std::size_t i = 0; i < w1.size(); ++i)
    REQUIRE(w1[i] == Catch::Approx(w2[i]).margin(1e-12));
}

TEST_CASE("decentralized variants are permutation equivariant") {
  Rng rng(17);
  for (Variant v : {Variant::modgnn_mlp, Variant::modgnn_mlp_no_fpre,
                    Variant::modgnn_mlp_no_fmid, Variant::gcn,
                    Variant::gcn_ffinal}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.K = 2;
    cfg.seed = 21;
    Model m = build_model(cfg);
    const int n = 6;
    CommGraph g = random_graph(n, rng);
    Tensor obs = random_obs(n, 6, rng);
    Tensor base = m.forward_frame(obs, g);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> pobs(obs.numel());
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 6; ++c)
        pobs[std::size_t(i) * 6 + c] = obs.data()[std::size_t(perm[i]) * 6 + c];
    Tensor permuted =
        m.forward_frame(Tensor({n, 6}, pobs), permute_graph(g, perm));

    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c)
        REQUIRE(std::abs(permuted.data()[std::size_t(i) * 3 + c] -
                         base.data()[std::size_t(perm[i]) * 3 + c]) < 1e-9);
  }
}

TEST_CASE("modgnn_mlp forward matches a scalar reference of the node update") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    ModelConfig cfg;
    cfg.variant = Variant::modgnn_mlp;
    cfg.K = 2;
    cfg.seed = 100 + trial;
    Model m = build_model(cfg);
    const int n = 5;
    CommGraph g = random_graph(n, rng);
    Tensor obs = random_obs(n, 6, rng);
    Tensor got = m.forward_frame(obs, g);
    const auto want = scalar_modgnn_forward(m, obs, g);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c)
        REQUIRE(std::abs(got.data()[std::size_t(i) * 3 + c] - want[i][c]) <
                1e-8);
  }
}

TEST_CASE("centralized and delayed forward agree after K warm-up steps") {
  Rng rng(31);
  for (Variant v : {Variant::modgnn_mlp, Variant::gcn}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.K = 2;
    cfg.seed = 7;
    Model m = build_model(cfg);
    const int n = 6;
    CommGraph g = random_graph(n, rng);
    Tensor obs = random_obs(n, 6, rng);
    Tensor want = m.forward_frame(obs, g);
    DelayState ds = m.make_delay_state(n);
    Tensor got;
    for (int t = 0; t <= cfg.K; ++t) got = m.forward_frame_delayed(obs, g, ds);
    for (std::size_t i = 0; i < want.numel(); ++i)
      REQUIRE(got.data()[i] == want.data()[i]);
  }
}

TEST_CASE("every variant passes finite-difference gradient checks") {
  Rng rng(41);
  for (Variant v : {Variant::modgnn_mlp, Variant::modgnn_mlp_no_fpre,
                    Variant::modgnn_mlp_no_fmid, Variant::gcn,
                    Variant::gcn_ffinal, Variant::central}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.K = 1;
    cfg.obs_dim = 3;
    cfg.action_dim = 2;
    cfg.hidden_width = 5;
    cfg.inner_width = 3;
    cfg.n_agents = 4;
    cfg.seed = 50;
    Model m = build_model(cfg);
    const int n = 4;
    CommGraph g = random_graph(n, rng, 0.8);
    Tensor obs = random_obs(n, 3, rng);
    std::vector<double> tv(std::size_t(n) * 2);
    for (double& x : tv) x = rng.uniform(-1, 1);
    Tensor target({n, 2}, tv);

    auto loss_fn = [&] {
      Tensor d = sub(m.forward_frame(obs, g), target);
      return scale(sum_all(mul(d, d)), 1.0 / double(n * 2));
    };
    std::vector<Tensor> params = m.param_tensors();
    zero_grads(params);
    Tensor loss = loss_fn();
    loss.backward();

    const double h = 1e-5;
    for (Tensor& p : params) {
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double orig = p.data()[i];
        p.data()[i] = orig + h;
        const double up = loss_fn().item();
        p.data()[i] = orig - h;
        const double down = loss_fn().item();
        p.data()[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double ad = p.grad()[i];
        const double rel =
            std::abs(fd - ad) / std::max({1.0, std::abs(fd), std::abs(ad)});
        INFO(to_string(v));
        REQUIRE(rel < 1e-4);
      }
    }
  }
}

TEST_CASE("central model rejects a frame with the wrong agent count") {
  ModelConfig cfg;
  cfg.variant = Variant::central;
  cfg.n_agents = 8;
  Model m = build_model(cfg);
  Rng rng(1);
  Tensor obs = random_obs(4, 6, rng);
  REQUIRE_THROWS_AS(m.forward_frame(obs, CommGraph(4)), std::invalid_argument);
}

TEST_CASE("multi-layer models run and feed all previous layers forward") {
  ModelConfig cfg;
  cfg.variant = Variant::modgnn_mlp;
  cfg.K = 1;
  cfg.L = 2;
  cfg.seed = 3;
  Model m = build_model(cfg);
  REQUIRE(m.layers.size() == 2);
  REQUIRE(m.layer_widths == std::vector<int>{6, 10, 3});
  Rng rng(2);
  const int n = 4;
  Tensor obs = random_obs(n, 6, rng);
  Tensor out = m.forward_frame(obs, random_graph(n, rng));
  REQUIRE(out.shape() == Shape{n, 3});
}

TEST_CASE("checkpoints round-trip value-exactly") {
  ModelConfig cfg;
  cfg.variant = Variant::modgnn_mlp;
  cfg.K = 1;
  cfg.seed = 77;
  Model m = build_model(cfg);
  const std::string path = "test_model_ckpt.json";
  save_checkpoint(m.to_checkpoint(), path);
  Model m2 = model_from_checkpoint(load_checkpoint(path));
  auto a = m.named_params();
  auto b = m2.named_params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].first == b[i].first);
    for (std::size_t j = 0; j < a[i].second.numel(); ++j)
      REQUIRE(a[i].second.data()[j] == b[i].second.data()[j]);
  }
  std::remove(path.c_str());
}

TEST_CASE("unknown variant strings are rejected") {
  REQUIRE_THROWS_AS(variant_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("shared hop parameters are emitted once") {
  ModelConfig cfg;
  cfg.variant = Variant::modgnn_mlp;
  cfg.K = 2;
  cfg.share_hop_params = true;
  Model m = build_model(cfg);
  int shared_pre = 0;
  for (const auto& [name, t] : m.named_params())
    if (name.find("f_pre.shared") != std::string::npos) ++shared_pre;
  REQUIRE(shared_pre == 6);  // w0,b0,w1,b1,w2,b2 exactly once
}
