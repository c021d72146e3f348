#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "modgnn/dataset.hpp"
#include "modgnn/model.hpp"
#include "modgnn/nn.hpp"

namespace modgnn {

// Mean of squared componentwise differences over unmasked agents.
// mask[i] != 0 means agent i counts (the leader is masked out upstream:
// its label is its noisy target, not expert policy).
inline Tensor mse_loss(const Tensor& predicted, const Tensor& target,
                       const std::vector<std::uint8_t>& mask) {
  detail::require(predicted.shape() == target.shape(),
                  "mse_loss: prediction/target shape mismatch");
  detail::require(static_cast<int>(mask.size()) == predicted.shape()[0],
                  "mse_loss: one mask entry per agent required");
  std::size_t n_counted = 0;
  std::vector<double> factors(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    factors[i] = mask[i] ? 1.0 : 0.0;
    n_counted += mask[i] ? 1 : 0;
  }
  if (n_counted == 0) throw std::logic_error("mse_loss: all agents masked");
  Tensor diff = scale_rows(sub(predicted, target), std::move(factors));
  Tensor sq = mul(diff, diff);
  return scale(sum_all(sq),
               1.0 / (double(n_counted) * predicted.shape()[1]));
}

struct TrainConfig {
  ModelConfig model;
  int epochs = 30;
  int batch_size = 16;     // frames per batch
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;  // master seed: batching, splits, model init
};

struct TrainReport {
  std::vector<double> train_losses;  // per epoch, mean of batch losses
  std::vector<double> val_losses;    // per epoch; empty if no val frames
  double wall_seconds = 0.0;         // not serialized (outputs stay reproducible)
  std::string checkpoint_ref;
  std::uint64_t batch_schedule_digest = 0;  // shared-seed fairness witness
  bool diverged = false;
};

namespace detail {

struct FrameRef {
  int episode;
  int t;
};

// Stack the referenced frames into one block-diagonal batch.
inline FrameBatch make_frame_batch(const Dataset& ds,
                                   std::span<const FrameRef> refs,
                                   std::vector<double>* targets_out) {
  FrameBatch fb;
  fb.n_frames = static_cast<int>(refs.size());
  fb.agent_offset.push_back(0);
  std::vector<double> obs;
  std::vector<double> targets;
  for (const FrameRef& r : refs) {
    const Frame& f = ds.episodes[r.episode].frames[r.t];
    const int n = f.state.n_agents();
    const int base = fb.agent_offset.back();
    const Tensor o = observations_of(f.state);
    obs.insert(obs.end(), o.data().begin(), o.data().end());
    const EdgeList e = edges_of(f.graph);
    for (std::size_t k = 0; k < e.recv.size(); ++k) {
      fb.edges.recv.push_back(e.recv[k] + base);
      fb.edges.send.push_back(e.send[k] + base);
    }
    for (int i = 0; i < n; ++i) {
      fb.loss_mask.push_back(i == f.state.leader_index ? 0 : 1);
      for (int a = 0; a < 3; ++a)
        targets.push_back(f.expert_actions[i][a]);
    }
    fb.agent_offset.push_back(base + n);
  }
  fb.edges.n_agents = fb.agent_offset.back();
  fb.obs = Tensor({fb.agent_offset.back(), 6}, std::move(obs));
  if (targets_out) *targets_out = std::move(targets);
  return fb;
}

inline std::uint64_t digest_indices(std::uint64_t h,
                                    std::span<const FrameRef> refs) {
  for (const FrameRef& r : refs) {
    h = seeds::splitmix64(h ^ std::uint64_t(r.episode));
    h = seeds::splitmix64(h ^ std::uint64_t(r.t));
  }
  return h;
}

}  // namespace detail

// Loss of one stacked batch against the recorded expert actions.
inline Tensor batch_loss(const Model& model, const FrameBatch& fb,
                         const std::vector<double>& targets) {
  Tensor pred = model.forward_batch(fb);
  Tensor target({fb.total_agents(), model.cfg.action_dim}, targets);
  return mse_loss(pred, target, fb.loss_mask);
}

// Mean expert-trajectory loss of a model over a list of frames; no
// parameter mutation, no tape.
inline double evaluate_frames(const Model& model, const Dataset& ds,
                              std::span<const detail::FrameRef> refs) {
  detail::require(!refs.empty(), "evaluate_frames: empty frame list");
  NoGradGuard ng;
  double total = 0.0;
  // one frame at a time keeps peak memory flat
  for (const detail::FrameRef& r : refs) {
    std::vector<double> targets;
    FrameBatch fb = detail::make_frame_batch(ds, {&r, 1}, &targets);
    total += batch_loss(model, fb, targets).item();
  }
  return total / double(refs.size());
}

struct TrainResult {
  Model model;
  TrainReport report;
  std::vector<detail::FrameRef> validation_frames;
};

// Shuffled minibatch regression onto the expert actions.  The batch
// schedule and train/validation split depend only on the seed and dataset
// shape, never on the model variant, so models trained with the same seed
// see identical batches.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  detail::require(!ds.episodes.empty() && ds.n_frames() > 0,
                  "train: dataset is empty");
  detail::require(cfg.batch_size >= 1, "train: batch_size must be >= 1");
  detail::require(cfg.validation_fraction > 0.0 &&
                      cfg.validation_fraction < 1.0,
                  "train: validation fraction must be in (0, 1)");
  const auto t_start = std::chrono::steady_clock::now();

  std::vector<detail::FrameRef> all;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e)
    for (std::size_t t = 0; t < ds.episodes[e].frames.size(); ++t)
      all.push_back({int(e), int(t)});

  // split is a deterministic function of (seed, frame count)
  Rng split_rng(seeds::derive(cfg.seed, "train_val_split"));
  split_rng.shuffle(all);
  const std::size_t n_val =
      static_cast<std::size_t>(cfg.validation_fraction * double(all.size()));
  std::vector<detail::FrameRef> val(all.end() - n_val, all.end());
  std::vector<detail::FrameRef> trainset(all.begin(), all.end() - n_val);
  detail::require(!trainset.empty(), "train: no training frames after split");

  TrainResult out;
  out.model = build_model(cfg.model);
  out.validation_frames = val;
  std::vector<Tensor> params = out.model.param_tensors();
  OptimState optim(AdamConfig{cfg.learning_rate});

  std::uint64_t digest = seeds::fnv1a("batch_schedule");
  double best_smoothed = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(seeds::derive(cfg.seed, "epoch_shuffle", epoch));
    shuffle_rng.shuffle(trainset);
    digest = detail::digest_indices(digest, trainset);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < trainset.size();
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(trainset.size(), start + cfg.batch_size);
      std::vector<double> targets;
      FrameBatch fb = detail::make_frame_batch(
          ds, {trainset.data() + start, stop - start}, &targets);
      zero_grads(params);
      Tensor loss = batch_loss(out.model, fb, targets);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      loss.backward();
      optim_step(optim, params);
      epoch_loss += lv;
      ++n_batches;
    }
    out.report.train_losses.push_back(epoch_loss / double(n_batches));
    if (!val.empty())
      out.report.val_losses.push_back(evaluate_frames(out.model, ds, val));

    // divergence flag: 5-epoch smoothed train loss must not rise >10%
    // above the best smoothed value seen so far
    const auto& tl = out.report.train_losses;
    const std::size_t w = std::min<std::size_t>(5, tl.size());
    const double smoothed =
        std::accumulate(tl.end() - w, tl.end(), 0.0) / double(w);
    if (smoothed > 1.10 * best_smoothed) out.report.diverged = true;
    best_smoothed = std::min(best_smoothed, smoothed);
  }

  out.report.batch_schedule_digest = digest;
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

// evaluate a checkpointed model on held-out expert frames
inline double evaluate_validation(const Model& model, const Dataset& ds,
                                  std::span<const detail::FrameRef> refs) {
  return evaluate_frames(model, ds, refs);
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"validation_fraction", c.validation_fraction},
          {"seed", c.seed}};
}

// Report serialization deliberately leaves out wall time so that rerunning
// a command with the same seed produces byte-identical files.
inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json j;
  j["train_losses"] = r.train_losses;
  j["val_losses"] = r.val_losses;
  j["checkpoint_ref"] = r.checkpoint_ref;
  j["batch_schedule_digest"] = r.batch_schedule_digest;
  j["diverged"] = r.diverged;
  return j;
}

}  // namespace modgnn
