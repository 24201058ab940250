#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tscl/augment.hpp"
#include "tscl/data.hpp"
#include "tscl/eval.hpp"
#include "tscl/model.hpp"
#include "tscl/optim.hpp"
#include "tscl/ssl.hpp"

namespace tscl::train {

struct TrainConfig {
  std::size_t total_steps = 2000;
  std::size_t batch_size = 128;
  double base_lr = 2e-3;
  double peak_lr = 5e-2;
  double final_lr = 5e-5;
  double warmup_fraction = 0.2;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::size_t group_size = 4;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
  // ceil(warmup_fraction * total_steps)
  std::size_t warmup_steps() const;
};

// Cosine rise from base to peak over the warmup steps, then cosine decay to
// final at the last step. Throws unless 0 <= step < total_steps.
double one_cycle_lr(std::size_t step, const TrainConfig& cfg);

struct ValPoint {
  std::size_t step = 0;
  double score = 0.0;
};

// Step with the highest score; ties go to the earliest step.
std::size_t select_checkpoint(const std::vector<ValPoint>& history);

// Everything a pretraining run needs besides data.
struct PretrainSettings {
  ModelConfig model;
  augment::AugmentConfig augment;
  ssl::SslConfig ssl;
  TrainConfig train;
  eval::ProbeConfig probe;

  void validate() const;
  nlohmann::json to_json() const;
};

// Online network, optional momentum target and key queue, and optimizer.
struct PretrainState {
  SslModel<float> online;
  std::optional<SslModel<float>> target;
  std::optional<ssl::KeyQueue> queue;
  optim::Sgd<float> optimizer{0.9, 5e-4};

  static PretrainState create(const PretrainSettings& s);
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  // Mean per-dimension std of the batch's pooled encoder outputs (H) and of
  // the projections (Z, both views).
  double embedding_std = 0.0;
  double projection_std = 0.0;
};

// One optimization step on the given samples. View construction for sample
// i uses substreams keyed by (step, sample_ids[i]) of seed_rng, so the result
// does not depend on worker scheduling.
StepResult pretrain_step(PretrainState& state, std::span<const Sample* const> batch,
                         std::span<const std::size_t> sample_ids, std::size_t step,
                         const PretrainSettings& s, const RngStream& seed_rng);

// Views for a batch: rows ordered [view 1 of every group member of every
// sample; view 2 likewise], each series T x C.
std::pair<nn::Matrix<float>, nn::Matrix<float>> build_views(
    std::span<const Sample* const> batch, std::span<const std::size_t> sample_ids,
    std::size_t step, const PretrainSettings& s, const RngStream& seed_rng);

// Linear-probe accuracy on a labeled set split within each class into
// alternating fit / score halves.
double validation_score(nn::Encoder<float>& encoder, const Dataset& val,
                        const eval::ProbeConfig& probe);

struct PretrainResult {
  std::size_t steps_run = 0;
  std::vector<double> losses;
  std::vector<ValPoint> history;
  std::size_t best_step = 0;
  // Parameters at the selected step (online network).
  SslModel<float> best_model;
  SslModel<float> final_model;
  double final_embedding_std = 0.0;
  double final_projection_std = 0.0;
};

struct RunHooks {
  // Run directory for CSV logs and checkpoints; nothing is written when empty.
  std::filesystem::path run_dir;
  // Extra entries merged into each checkpoint's config JSON.
  nlohmann::json extra_config = nlohmann::json::object();
  // Called after every step.
  std::function<void(std::size_t, const StepResult&)> on_step;
};

// Full pretraining loop: epochs without replacement over `unlabeled`,
// one-cycle schedule, evaluation every eval_every steps and at the last step.
// Throws NumericalError on a non-finite loss or when the spread of either the
// embeddings or the projections falls below the collapse threshold.
PretrainResult pretrain(const Dataset& unlabeled, const Dataset* val,
                        const PretrainSettings& s, const RunHooks& hooks = {});

// Checkpoint config for a pretrained model.
nlohmann::json checkpoint_config(const PretrainSettings& s, std::size_t step,
                                 const nlohmann::json& extra);

}  // namespace tscl::train
