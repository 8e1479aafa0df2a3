#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <vector>

#include "viewpose/data.hpp"
#include "viewpose/losses.hpp"
#include "viewpose/model.hpp"

namespace viewpose {

struct LossToggles {
  bool invar = true;
  bool equiv = true;  // rec1 + rec2 are always on (every Table-style ablation keeps them)
};

struct PretextConfig {
  double learning_rate = 2e-4;
  int64_t batch_size = 5;
  int64_t epochs = 20;
  LossWeights weights;
  LossToggles toggles;
  std::uint64_t seed = 0;
  ModelConfig model;

  void validate() const;
};

struct StepMetrics {
  int64_t step = 0;
  int64_t epoch = 0;
  LossBreakdown losses;
  double wall_time_s = 0.0;
};

// Eq. 1: per view, with probability 0.5 the rotation comes from the current
// frame k, otherwise from the random frame m (view v) / n (view w).
struct RotationSelection {
  bool v_from_random_frame = false;
  bool w_from_random_frame = false;
};
RotationSelection select_rotation_sources(Rng& rng);

// One optimizer update over a batch of tuples. Throws (naming the component)
// on a non-finite loss.
StepMetrics training_step(AutoEncoder model, torch::optim::Optimizer& optimizer,
                          const std::vector<TrainingTuple>& batch, const LossWeights& weights,
                          const LossToggles& toggles, Rng& rng);

// Loss evaluation without an update (validation); dropout/BN in eval mode.
LossBreakdown evaluate_loss(AutoEncoder model, const std::vector<TrainingTuple>& batch,
                            const LossWeights& weights, const LossToggles& toggles, Rng& rng);

struct TrainResult {
  std::filesystem::path checkpoint;     // final
  std::filesystem::path metrics;        // JSONL, one record per step
  std::vector<StepMetrics> step_metrics;
};

TrainResult train(const MultiViewDataset& dataset, const PretextConfig& config,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt);

struct SweepResult {
  std::vector<int64_t> sizes;
  std::vector<double> mean_total;  // average validation L_total per size
  int64_t best_size = 0;
};

SweepResult sweep_latent_size(const MultiViewDataset& dataset, std::vector<int64_t> sizes,
                              int folds, const PretextConfig& base_config,
                              const std::filesystem::path& work_dir);

}  // namespace viewpose
