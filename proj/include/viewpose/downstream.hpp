#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "viewpose/data.hpp"
#include "viewpose/model.hpp"

namespace viewpose {

enum class TrainMode { kFrozen, kFineTune, kScratch };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

struct HeadConfig {
  int64_t hidden_size = 512;  // per direction
  int64_t n_outputs = 4;      // n_classes, or max_score + 1 for quality scoring
  TrainMode mode = TrainMode::kFrozen;
  bool quality_task = false;  // random 16-frame clips instead of 16-segment subsampling
  double learning_rate = 2e-4;
  int64_t batch_size = 8;
  int64_t epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// Ordered frames of one view plus the task label (action class or score).
struct SequenceSample {
  std::vector<torch::Tensor> frames;
  int label = 0;
};

// Two-layer bidirectional GRU over per-frame canonical pose vectors, followed
// by one FC layer on the final hidden states of both directions.
class SequenceHeadImpl : public torch::nn::Module {
 public:
  SequenceHeadImpl(int64_t input_size, int64_t hidden_size, int64_t n_outputs);
  torch::Tensor forward(const torch::Tensor& features);  // BxTxF -> B x n_outputs logits

 private:
  torch::nn::GRU gru_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(SequenceHead);

struct DownstreamModel {
  ModelConfig model_config;
  HeadConfig head_config;
  PoseEncoder encoder{nullptr};
  SequenceHead head{nullptr};
  std::string encoder_digest;  // digest of the pretext checkpoint, empty for scratch

  torch::Tensor head_logits(const std::vector<torch::Tensor>& frames);  // one 16-frame clip
};

// Softmax class probabilities for exactly one 16-frame sequence.
torch::Tensor classify_sequence(DownstreamModel& model,
                                const std::vector<torch::Tensor>& frames);

// Mean FC output over all non-overlapping 16-frame clips, read out as the
// expectation of the softmax score distribution.
double score_sequence(DownstreamModel& model, const std::vector<torch::Tensor>& frames);

struct DownstreamTrainResult {
  DownstreamModel model;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_train_accuracy;
};

// epoch_callback, when given, runs after every epoch (e.g. to score a
// validation split); it must not consume the torch global RNG mid-stream.
DownstreamTrainResult train_downstream(
    const std::vector<SequenceSample>& samples,
    const std::optional<std::filesystem::path>& encoder_ckpt,
    const ModelConfig& model_config, const HeadConfig& head_config,
    const std::function<void(int64_t, DownstreamModel&)>& epoch_callback = {});

void save_head_checkpoint(const std::filesystem::path& path, DownstreamModel& model);
DownstreamModel load_head_checkpoint(const std::filesystem::path& path);

// Single-view training samples from a multi-view dataset, restricted to the
// given view indices.
std::vector<SequenceSample> flatten_views(const MultiViewDataset& dataset,
                                          const std::vector<int>& view_indices);

}  // namespace viewpose
