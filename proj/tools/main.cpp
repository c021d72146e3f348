#include <CLI11.hpp>

#include <iostream>

#include "modgnn/commands.hpp"

// modgnn: data generation, imitation training, closed-loop evaluation and
// the generalization matrix, all driven by one flat config file.
//
// Exit codes: 0 success, 1 config error, 2 runtime/divergence error.

namespace {

void add_common_flags(CLI::App* cmd, modgnn::CliOptions& opt,
                      bool with_variant = true) {
  cmd->add_option("--config", opt.config_path, "flat key=value config file");
  if (with_variant) {
    cmd->add_option("--variant", [&opt](const std::vector<std::string>& v) {
      opt.variant = v.back();
      return true;
    }, "model variant (modgnn_mlp, modgnn_mlp_no_fpre, modgnn_mlp_no_fmid, "
       "gcn, gcn_ffinal, central; eval also accepts 'expert')");
    cmd->add_option("--K", [&opt](const std::vector<std::string>& v) {
      opt.K = std::stoi(v.back());
      return true;
    }, "number of communication hops");
  }
  cmd->add_option("--seed", [&opt](const std::vector<std::string>& v) {
    opt.seed = std::stoull(v.back());
    return true;
  }, "master seed; all sub-seeds derive from it");
  cmd->add_option("--jobs", opt.jobs, "worker threads (output is identical "
                                      "for any job count)");
  cmd->add_option("--out", [&opt](const std::vector<std::string>& v) {
    opt.out = v.back();
    return true;
  }, "output path override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "modgnn: modular decentralized GNNs trained to imitate a flocking "
      "expert"};
  app.require_subcommand(1);

  modgnn::CliOptions opt;
  int (*run)(const modgnn::CliOptions&) = nullptr;

  auto* gen = app.add_subcommand("gen-data",
                                 "generate an expert flocking dataset");
  add_common_flags(gen, opt, /*with_variant=*/false);
  gen->callback([&] { run = modgnn::cmd_gen_data; });

  auto* train = app.add_subcommand("train",
                                   "train one (variant, K) on a dataset");
  add_common_flags(train, opt);
  train->callback([&] { run = modgnn::cmd_train; });

  auto* eval = app.add_subcommand("eval",
                                  "closed-loop rollout metrics for one model");
  add_common_flags(eval, opt);
  eval->callback([&] { run = modgnn::cmd_eval; });

  auto* matrix = app.add_subcommand(
      "matrix", "variants x K x N generalization cross, one CSV");
  add_common_flags(matrix, opt);
  matrix->callback([&] { run = modgnn::cmd_matrix; });

  auto* inspect =
      app.add_subcommand("inspect", "dump dataset/checkpoint/report headers");
  inspect->add_option("path", opt.inspect_path, "file to inspect")
      ->required();
  inspect->callback([&] { run = modgnn::cmd_inspect; });

  CLI11_PARSE(app, argc, argv);

  try {
    return run(opt);
  } catch (const modgnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
