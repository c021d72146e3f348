#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "modgnn/config.hpp"
#include "modgnn/rollout.hpp"
#include "modgnn/training.hpp"

// CLI command implementations.  Each returns a process exit code:
// 0 success, 1 config error, 2 runtime/divergence error.

namespace modgnn {

struct CliOptions {
  std::string config_path;
  std::optional<std::string> variant;
  std::optional<int> K;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<std::string> out;
  std::string inspect_path;  // inspect only
};

// Everything a run needs, parsed from one flat config (plus flag
// overrides).  All commands share the schema so that one config file can
// drive a whole experiment.
struct RunConfig {
  EnvConfig env;
  FlockingGains gains;
  std::uint64_t master_seed = 0;

  int data_episodes = 50;

  ModelConfig model;  // variant/K filled per command
  int train_epochs = 30;
  int train_batch_size = 16;
  double train_learning_rate = 1e-3;
  double train_validation_fraction = 0.1;

  int eval_episodes = 5;
  bool eval_delayed = false;

  std::vector<std::string> matrix_variants;
  std::vector<int> matrix_K;
  std::vector<int> matrix_N;

  std::string dataset_path = "dataset.jsonl";
  std::string checkpoint_dir = ".";
  std::string out_dir = ".";

  nlohmann::json resolved;
};

inline RunConfig parse_run_config(FlatConfig& c, const CliOptions& opt) {
  RunConfig r;
  if (opt.seed) c.set("seed", std::to_string(*opt.seed));
  if (opt.variant) c.set("model.variant", *opt.variant);
  if (opt.K) c.set("model.K", std::to_string(*opt.K));

  r.master_seed = c.get_u64("seed", 0);

  r.env.n_agents = c.get_int("env.n_agents", 8);
  r.env.r_com = c.get_double("env.r_com", 3.5);
  r.env.dt = c.get_double("env.dt", 0.05);
  r.env.episode_len = c.get_int("env.episode_len", 200);
  r.env.spawn_extent[0] = c.get_double("env.spawn_extent_x", 6.0);
  r.env.spawn_extent[1] = c.get_double("env.spawn_extent_y", 6.0);
  r.env.spawn_extent[2] = c.get_double("env.spawn_extent_z", 2.0);
  r.env.min_separation = c.get_double("env.min_separation", 0.7);
  r.env.leader_noise_std = c.get_double("env.leader_noise_std", 0.05);
  r.env.max_speed = c.get_double("env.max_speed", 1.0);
  r.env.tracking_gain = c.get_double("env.tracking_gain", 2.0);
  r.env.seed = seeds::derive(r.master_seed, "dataset");

  r.gains.cohesion = c.get_double("gains.cohesion", 0.05);
  r.gains.separation = c.get_double("gains.separation", 1.0);
  r.gains.alignment = c.get_double("gains.alignment", 0.1);

  r.data_episodes = c.get_int("data.episodes", 50);

  try {
    r.model.variant =
        variant_from_string(c.get_string("model.variant", "modgnn_mlp"));
    r.model.activation =
        activation_from_string(c.get_string("model.activation", "tanh"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  r.model.K = c.get_int("model.K", 2);
  r.model.L = c.get_int("model.L", 1);
  r.model.hidden_width = c.get_int("model.hidden_width", 32);
  r.model.inner_width = c.get_int("model.inner_width", 10);
  r.model.share_hop_params = c.get_bool("model.share_hop_params", false);
  const std::string gso = c.get_string("model.gso", "laplacian");
  if (gso != "laplacian" && gso != "adjacency")
    throw ConfigError("config key model.gso: expected laplacian|adjacency");
  r.model.comm = gso == "laplacian" ? CommRuleKind::laplacian_difference
                                    : CommRuleKind::identity;
  r.model.obs_dim = 6;
  r.model.action_dim = 3;
  r.model.n_agents = r.env.n_agents;
  r.model.seed = seeds::derive(r.master_seed, "model_init");

  r.train_epochs = c.get_int("train.epochs", 30);
  r.train_batch_size = c.get_int("train.batch_size", 16);
  r.train_learning_rate = c.get_double("train.learning_rate", 1e-3);
  r.train_validation_fraction =
      c.get_double("train.validation_fraction", 0.1);

  r.eval_episodes = c.get_int("eval.episodes", 5);
  r.eval_delayed = c.get_bool("eval.delayed", false);

  r.matrix_variants = c.get_string_list(
      "matrix.variants", "modgnn_mlp,modgnn_mlp_no_fpre,gcn");
  r.matrix_K = c.get_int_list("matrix.K", "2");
  r.matrix_N = c.get_int_list("matrix.N", "4,8,16");

  r.dataset_path = c.get_string("paths.dataset", "dataset.jsonl");
  r.checkpoint_dir = c.get_string("paths.checkpoint_dir", ".");
  r.out_dir = c.get_string("paths.out_dir", ".");

  c.reject_unknown_keys();
  r.resolved = c.resolved_json();
  return r;
}

inline RunConfig load_run_config(const CliOptions& opt) {
  FlatConfig c = opt.config_path.empty()
                     ? FlatConfig()
                     : FlatConfig::from_file(opt.config_path);
  return parse_run_config(c, opt);
}

inline std::string checkpoint_path(const RunConfig& r,
                                   const std::string& variant, int K) {
  return r.checkpoint_dir + "/" + variant + "_K" + std::to_string(K) +
         ".ckpt.json";
}

namespace detail {

inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(jobs, n); ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// --- gen-data ---------------------------------------------------------------

inline int cmd_gen_data(const CliOptions& opt) {
  RunConfig r = load_run_config(opt);
  const std::string path = opt.out.value_or(r.dataset_path);
  Dataset ds = generate_dataset(r.env, r.gains, r.data_episodes, opt.jobs);
  save_dataset(ds, path, r.resolved);
  const auto bytes = std::filesystem::file_size(path);
  std::cout << "wrote " << path << ": " << ds.episodes.size() << " episodes, "
            << ds.n_frames() << " frames, " << bytes << " bytes\n";
  return 0;
}

// --- train ------------------------------------------------------------------

inline int cmd_train(const CliOptions& opt) {
  RunConfig r = load_run_config(opt);
  if (!std::filesystem::exists(r.dataset_path))
    throw ConfigError("dataset not found: " + r.dataset_path +
                      " (run gen-data first)");
  Dataset ds = load_dataset(r.dataset_path);

  TrainConfig tc;
  tc.model = r.model;
  tc.epochs = r.train_epochs;
  tc.batch_size = r.train_batch_size;
  tc.learning_rate = r.train_learning_rate;
  tc.validation_fraction = r.train_validation_fraction;
  tc.seed = seeds::derive(r.master_seed, "train");

  TrainResult res = train(ds, tc);

  std::filesystem::create_directories(r.checkpoint_dir);
  std::filesystem::create_directories(r.out_dir);
  const std::string variant = to_string(r.model.variant);
  const std::string ckpt = opt.out.value_or(checkpoint_path(r, variant, r.model.K));
  Checkpoint c = res.model.to_checkpoint();
  c.extra["train_config"] = to_json(tc);
  c.extra["config"] = r.resolved;
  save_checkpoint(c, ckpt);
  res.report.checkpoint_ref = ckpt;

  const std::string stem = variant + "_K" + std::to_string(r.model.K);
  std::string csv = "# format_version=1\n# config: " + r.resolved.dump() + "\n";
  csv += "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < res.report.train_losses.size(); ++e) {
    csv += std::to_string(e) + "," + format_double(res.report.train_losses[e]) +
           ",";
    if (e < res.report.val_losses.size())
      csv += format_double(res.report.val_losses[e]);
    csv += "\n";
  }
  write_file(r.out_dir + "/loss_" + stem + ".csv", csv);

  nlohmann::json report = to_json(res.report);
  report["format_version"] = 1;
  report["config"] = r.resolved;
  write_file(r.out_dir + "/report_" + stem + ".json", report.dump(1) + "\n");

  std::cout << "trained " << stem << ": "
            << res.report.train_losses.size() << " epochs";
  if (!res.report.train_losses.empty()) {
    std::cout << ", final train loss "
              << format_double(res.report.train_losses.back());
  }
  if (!res.report.val_losses.empty()) {
    std::cout << ", final val loss "
              << format_double(res.report.val_losses.back());
  }
  std::cout << ", wall " << res.report.wall_seconds << " s\n"
            << "batch schedule digest " << res.report.batch_schedule_digest
            << "\ncheckpoint " << ckpt << "\n";
  if (res.report.diverged) {
    std::cerr << "training diverged (smoothed loss rose >10%)\n";
    return 2;
  }
  return 0;
}

// --- eval -------------------------------------------------------------------

inline int cmd_eval(const CliOptions& opt) {
  RunConfig r = load_run_config(opt);
  const std::string variant =
      opt.variant.value_or(to_string(r.model.variant));
  const std::uint64_t eval_seed = seeds::derive(r.master_seed, "eval");

  MetricsRow row;
  if (variant == "expert") {
    ExpertPolicy expert(r.gains);
    row = rollout(expert, "expert", r.env, r.gains, r.eval_episodes, eval_seed);
    row.K = r.model.K;
  } else {
    const std::string ckpt = checkpoint_path(r, variant, r.model.K);
    if (!std::filesystem::exists(ckpt))
      throw ConfigError("missing checkpoint: " + ckpt);
    Model m = model_from_checkpoint(load_checkpoint(ckpt));
    row = rollout_model(m, r.env, r.gains, r.eval_episodes, eval_seed,
                        r.eval_delayed);
  }

  std::filesystem::create_directories(r.out_dir);
  const std::string path = opt.out.value_or(
      r.out_dir + "/eval_" + variant + "_K" + std::to_string(r.model.K) +
      ".csv");
  write_file(path, metrics_csv({row}, {"format_version=1",
                                       "config: " + r.resolved.dump()}));
  std::cout << "wrote " << path << "\n";
  return 0;
}

// --- matrix -----------------------------------------------------------------

inline int cmd_matrix(const CliOptions& opt) {
  RunConfig r = load_run_config(opt);
  const std::uint64_t eval_seed = seeds::derive(r.master_seed, "eval");

  // load every checkpoint first so missing ones are reported by name
  std::vector<Model> models;
  std::vector<std::string> missing;
  for (const std::string& variant : r.matrix_variants) {
    for (int k : r.matrix_K) {
      const std::string ckpt = checkpoint_path(r, variant, k);
      if (!std::filesystem::exists(ckpt)) {
        missing.push_back(ckpt);
        continue;
      }
      models.push_back(model_from_checkpoint(load_checkpoint(ckpt)));
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing checkpoints:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }

  // one work item per (model, N), skipping central at foreign N
  struct Item {
    const Model* model;
    int n;
  };
  std::vector<Item> items;
  for (const Model& m : models)
    for (int n : r.matrix_N) {
      if (m.is_central() && n != m.cfg.n_agents) continue;
      items.push_back({&m, n});
    }
  std::vector<MetricsRow> rows(items.size());
  detail::parallel_for(
      static_cast<int>(items.size()), opt.jobs, [&](int i) {
        EnvConfig cfg = r.env;
        cfg.n_agents = items[i].n;
        rows[i] = rollout_model(*items[i].model, cfg, r.gains,
                                r.eval_episodes, eval_seed, r.eval_delayed);
      });

  std::filesystem::create_directories(r.out_dir);
  const std::string path = opt.out.value_or(r.out_dir + "/matrix.csv");
  write_file(path, metrics_csv(rows, {"format_version=1",
                                      "config: " + r.resolved.dump()}));
  std::cout << "wrote " << path << " (" << rows.size() << " rows)\n";
  return 0;
}

// --- inspect ----------------------------------------------------------------

inline int cmd_inspect(const CliOptions& opt) {
  const std::string& path = opt.inspect_path;
  if (!std::filesystem::exists(path))
    throw ConfigError("no such file: " + path);
  std::ifstream in(path, std::ios::binary);
  std::string first_line;
  std::getline(in, first_line);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(first_line);
  } catch (...) {
    // multi-line document (checkpoint / report)
    in.clear();
    in.seekg(0);
    in >> j;
  }
  if (j.contains("params")) {
    // checkpoint: print everything except the bulky value arrays
    nlohmann::json meta = j;
    auto& params = meta["params"];
    for (auto& p : params) p.erase("values");
    std::cout << meta.dump(1) << "\n";
  } else {
    std::cout << j.dump(1) << "\n";
  }
  return 0;
}

}  // namespace modgnn
