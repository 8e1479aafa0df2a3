#include "viewpose/downstream.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "viewpose/checkpoint.hpp"
#include "viewpose/rng.hpp"

namespace viewpose {

namespace fs = std::filesystem;

TrainMode parse_train_mode(const std::string& name) {
  if (name == "frozen") return TrainMode::kFrozen;
  if (name == "fine-tune") return TrainMode::kFineTune;
  if (name == "scratch") return TrainMode::kScratch;
  throw std::invalid_argument("unknown training mode: " + name);
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFrozen: return "frozen";
    case TrainMode::kFineTune: return "fine-tune";
    case TrainMode::kScratch: return "scratch";
  }
  throw std::invalid_argument("bad TrainMode");
}

void HeadConfig::validate() const {
  if (hidden_size <= 0) throw std::invalid_argument("hidden_size must be positive");
  if (n_outputs < 2) throw std::invalid_argument("n_outputs must be >= 2");
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
}

SequenceHeadImpl::SequenceHeadImpl(int64_t input_size, int64_t hidden_size,
                                   int64_t n_outputs) {
  gru_ = torch::nn::GRU(torch::nn::GRUOptions(input_size, hidden_size)
                            .num_layers(2)
                            .bidirectional(true)
                            .batch_first(true));
  fc_ = torch::nn::Linear(2 * hidden_size, n_outputs);
  register_module("gru", gru_);
  register_module("fc", fc_);
}

torch::Tensor SequenceHeadImpl::forward(const torch::Tensor& features) {
  auto [output, state] = gru_->forward(features);
  // Final hidden states of the last layer, forward and backward directions.
  auto fwd = state.select(0, state.size(0) - 2);
  auto bwd = state.select(0, state.size(0) - 1);
  return fc_->forward(torch::cat({fwd, bwd}, 1));
}

namespace {

// BxTx3xHxW -> BxTx3N canonical pose features.
torch::Tensor encode_clip_features(PoseEncoder encoder, const torch::Tensor& clips) {
  const int64_t b = clips.size(0), t = clips.size(1);
  auto flat = clips.reshape({b * t, clips.size(2), clips.size(3), clips.size(4)});
  return encoder->forward(flat).reshape({b, t, -1});
}

torch::Tensor stack_clip(const std::vector<torch::Tensor>& frames) {
  return torch::stack(frames).unsqueeze(0);  // 1xTx3xHxW
}

}  // namespace

torch::Tensor DownstreamModel::head_logits(const std::vector<torch::Tensor>& frames) {
  if (static_cast<int64_t>(frames.size()) != kClipLength) {
    throw std::invalid_argument("head expects exactly 16 frames, got " +
                                std::to_string(frames.size()));
  }
  auto features = encode_clip_features(encoder, stack_clip(frames));
  return head->forward(features).squeeze(0);
}

torch::Tensor classify_sequence(DownstreamModel& model,
                                const std::vector<torch::Tensor>& frames) {
  torch::NoGradGuard no_grad;
  model.encoder->eval();
  model.head->eval();
  return torch::softmax(model.head_logits(frames), 0);
}

double score_sequence(DownstreamModel& model, const std::vector<torch::Tensor>& frames) {
  const auto starts = clip_split_16(static_cast<int64_t>(frames.size()));
  torch::NoGradGuard no_grad;
  model.encoder->eval();
  model.head->eval();

  torch::Tensor logit_sum;
  for (int64_t start : starts) {
    std::vector<torch::Tensor> clip(frames.begin() + start,
                                    frames.begin() + start + kClipLength);
    auto logits = model.head_logits(clip);
    logit_sum = logit_sum.defined() ? logit_sum + logits : logits;
  }
  auto probs = torch::softmax(logit_sum / static_cast<double>(starts.size()), 0);
  auto scores = torch::arange(probs.size(0), probs.options());
  return (probs * scores).sum().item<double>();
}

DownstreamTrainResult train_downstream(
    const std::vector<SequenceSample>& samples,
    const std::optional<fs::path>& encoder_ckpt, const ModelConfig& model_config,
    const HeadConfig& head_config,
    const std::function<void(int64_t, DownstreamModel&)>& epoch_callback) {
  head_config.validate();
  if (samples.empty()) throw std::invalid_argument("no training samples");
  for (const auto& sample : samples) {
    if (sample.label < 0 || sample.label >= head_config.n_outputs) {
      throw std::invalid_argument("label " + std::to_string(sample.label) +
                                  " out of range for " +
                                  std::to_string(head_config.n_outputs) + " outputs");
    }
    if (sample.frames.empty()) throw std::invalid_argument("sample with no frames");
  }
  if (head_config.mode != TrainMode::kScratch && !encoder_ckpt) {
    throw std::invalid_argument("mode " + train_mode_name(head_config.mode) +
                                " requires a pretext encoder checkpoint");
  }

  DownstreamTrainResult result;
  result.model.model_config = model_config;
  result.model.head_config = head_config;

  torch::manual_seed(stream_seed(head_config.seed, "head-init"));
  if (encoder_ckpt) {
    auto loaded = load_checkpoint(*encoder_ckpt);
    result.model.model_config = loaded.config;
    result.model.encoder = loaded.model->pose_encoder();
    result.model.encoder_digest = file_digest(*encoder_ckpt);
  } else {
    result.model.encoder = PoseEncoder(model_config);
  }
  result.model.head = SequenceHead(3 * result.model.model_config.n_features,
                                   head_config.hidden_size, head_config.n_outputs);

  const bool frozen = head_config.mode == TrainMode::kFrozen;
  std::vector<torch::Tensor> trainable = result.model.head->parameters();
  if (frozen) {
    for (auto& p : result.model.encoder->parameters()) p.requires_grad_(false);
  } else {
    auto encoder_params = result.model.encoder->parameters();
    trainable.insert(trainable.end(), encoder_params.begin(), encoder_params.end());
  }
  torch::optim::Adam optimizer(trainable, torch::optim::AdamOptions(head_config.learning_rate));

  for (int64_t epoch = 0; epoch < head_config.epochs; ++epoch) {
    auto rng = make_rng(head_config.seed, "head-epoch-" + std::to_string(epoch));
    torch::manual_seed(stream_seed(head_config.seed, "head-torch-epoch-" + std::to_string(epoch)));

    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    result.model.head->train();
    // Frozen mode keeps the encoder in eval mode so BN statistics stay intact.
    if (frozen) {
      result.model.encoder->eval();
    } else {
      result.model.encoder->train();
    }

    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0, batches = 0;
    for (size_t offset = 0; offset < order.size(); offset += head_config.batch_size) {
      const size_t end = std::min(order.size(), offset + head_config.batch_size);
      std::vector<torch::Tensor> clips;
      std::vector<int64_t> labels;
      for (size_t i = offset; i < end; ++i) {
        const auto& sample = samples[order[i]];
        const auto length = static_cast<int64_t>(sample.frames.size());
        std::vector<int64_t> indices;
        if (head_config.quality_task) {
          if (length < kClipLength) {
            throw std::invalid_argument("quality-task sample shorter than 16 frames");
          }
          std::uniform_int_distribution<int64_t> start(0, length - kClipLength);
          const int64_t s = start(rng);
          for (int64_t f = 0; f < kClipLength; ++f) indices.push_back(s + f);
        } else {
          indices = subsample_16(length, rng);
        }
        std::vector<torch::Tensor> clip;
        for (int64_t idx : indices) clip.push_back(sample.frames[idx]);
        clips.push_back(torch::stack(clip));
        labels.push_back(sample.label);
      }
      auto batch = torch::stack(clips);
      auto target = torch::tensor(labels, torch::kLong);

      optimizer.zero_grad();
      auto features = encode_clip_features(result.model.encoder, batch);
      auto logits = result.model.head->forward(features);
      auto loss = torch::cross_entropy_loss(logits, target);
      loss.backward();
      optimizer.step();

      loss_sum += loss.item<double>();
      correct += (logits.argmax(1) == target).sum().item<int64_t>();
      seen += target.size(0);
      ++batches;
    }
    result.epoch_train_loss.push_back(loss_sum / std::max<int64_t>(batches, 1));
    result.epoch_train_accuracy.push_back(static_cast<double>(correct) /
                                          std::max<int64_t>(seen, 1));
    if (epoch_callback) epoch_callback(epoch, result.model);
  }

  return result;
}

void save_head_checkpoint(const fs::path& path, DownstreamModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open head checkpoint for writing: " + path.string());
  nlohmann::json meta{{"hidden_size", model.head_config.hidden_size},
                      {"n_outputs", model.head_config.n_outputs},
                      {"mode", train_mode_name(model.head_config.mode)},
                      {"quality_task", model.head_config.quality_task},
                      {"learning_rate", model.head_config.learning_rate},
                      {"batch_size", model.head_config.batch_size},
                      {"epochs", model.head_config.epochs},
                      {"seed", model.head_config.seed},
                      {"encoder_digest", model.encoder_digest},
                      {"n_features", model.model_config.n_features},
                      {"resolution", model.model_config.resolution},
                      {"dropout_rate", model.model_config.dropout_rate}};
  out << kHeadCheckpointHeader << '\n' << meta.dump() << '\n';
  detail::write_blob(out, detail::module_to_bytes(*model.encoder));
  detail::write_blob(out, detail::module_to_bytes(*model.head));
  if (!out) throw std::runtime_error("failed writing head checkpoint: " + path.string());
}

DownstreamModel load_head_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open head checkpoint: " + path.string());
  std::string header, meta_line;
  std::getline(in, header);
  if (header != kHeadCheckpointHeader) {
    throw std::runtime_error("bad head checkpoint header in " + path.string());
  }
  std::getline(in, meta_line);
  auto meta = nlohmann::json::parse(meta_line);

  DownstreamModel model;
  model.model_config.n_features = meta.at("n_features").get<int64_t>();
  model.model_config.resolution = meta.at("resolution").get<int64_t>();
  model.model_config.dropout_rate = meta.at("dropout_rate").get<double>();
  model.head_config.hidden_size = meta.at("hidden_size").get<int64_t>();
  model.head_config.n_outputs = meta.at("n_outputs").get<int64_t>();
  model.head_config.mode = parse_train_mode(meta.at("mode").get<std::string>());
  model.head_config.quality_task = meta.at("quality_task").get<bool>();
  model.head_config.learning_rate = meta.at("learning_rate").get<double>();
  model.head_config.batch_size = meta.at("batch_size").get<int64_t>();
  model.head_config.epochs = meta.at("epochs").get<int64_t>();
  model.head_config.seed = meta.at("seed").get<std::uint64_t>();
  model.encoder_digest = meta.at("encoder_digest").get<std::string>();

  model.encoder = PoseEncoder(model.model_config);
  model.head = SequenceHead(3 * model.model_config.n_features, model.head_config.hidden_size,
                            model.head_config.n_outputs);
  detail::bytes_to_module(detail::read_blob(in), *model.encoder);
  detail::bytes_to_module(detail::read_blob(in), *model.head);
  return model;
}

std::vector<SequenceSample> flatten_views(const MultiViewDataset& dataset,
                                          const std::vector<int>& view_indices) {
  std::vector<SequenceSample> samples;
  for (const auto& seq : dataset.sequences) {
    if (!seq.label) throw std::invalid_argument("sequence " + seq.scene_id + " has no label");
    for (int v : view_indices) {
      samples.push_back({seq.views.at(v).frames, *seq.label});
    }
  }
  return samples;
}

}  // namespace viewpose
