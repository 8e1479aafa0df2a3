#include "testing.hpp"

#include <filesystem>

#include "viewpose/checkpoint.hpp"
#include "viewpose/downstream.hpp"
#include "viewpose/trainer.hpp"

using namespace viewpose;

namespace {

SyntheticSceneSpec tiny_spec() {
  SyntheticSceneSpec spec;
  spec.camera_azimuth_deg = {0.0, 90.0};
  spec.resolution = 16;
  spec.seed = 31;
  return spec;
}

ModelConfig tiny_model() { return ModelConfig{4, 16, 0.0}; }

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("classifier output is a probability vector") {
  torch::manual_seed(1);
  DownstreamModel model;
  model.model_config = tiny_model();
  model.head_config.n_outputs = 4;
  model.encoder = PoseEncoder(model.model_config);
  model.head = SequenceHead(12, 32, 4);

  std::vector<torch::Tensor> frames(16, torch::rand({3, 16, 16}) * 2.0 - 1.0);
  auto probs = classify_sequence(model, frames);
  CHECK(probs.size(0) == 4);
  CHECK(probs.min().item<double>() >= 0.0);
  CHECK(std::abs(probs.sum().item<double>() - 1.0) < 1e-6);

  std::vector<torch::Tensor> wrong(10, frames[0]);
  CHECK_THROWS_AS(classify_sequence(model, wrong), std::invalid_argument);
}

TEST_CASE("score averaging is the identity on repeated clips") {
  torch::manual_seed(2);
  DownstreamModel model;
  model.model_config = tiny_model();
  model.head_config.n_outputs = 5;
  model.encoder = PoseEncoder(model.model_config);
  model.head = SequenceHead(12, 32, 5);

  std::vector<torch::Tensor> clip(16, torch::rand({3, 16, 16}) * 2.0 - 1.0);
  const double single = score_sequence(model, clip);

  std::vector<torch::Tensor> doubled(clip);
  doubled.insert(doubled.end(), clip.begin(), clip.end());
  CHECK(score_sequence(model, doubled) == doctest::Approx(single).epsilon(1e-10));

  CHECK(single >= 0.0);
  CHECK(single <= 4.0);

  std::vector<torch::Tensor> too_short(10, clip[0]);
  CHECK_THROWS_AS(score_sequence(model, too_short), std::invalid_argument);
}

TEST_CASE("frozen mode leaves encoder weights bit-identical") {
  auto dataset = generate_synthetic(tiny_spec(), 4, 16);
  PretextConfig pretext = {};
  pretext.model = tiny_model();
  pretext.epochs = 1;
  pretext.batch_size = 2;
  pretext.seed = 5;
  const auto dir = temp_dir("viewpose-frozen-test");
  auto pretrained = train(dataset, pretext, dir);

  auto before = load_checkpoint(pretrained.checkpoint).model->pose_encoder();

  HeadConfig head;
  head.hidden_size = 32;
  head.n_outputs = 4;
  head.mode = TrainMode::kFrozen;
  head.epochs = 2;
  head.batch_size = 4;
  auto samples = flatten_views(dataset, {0, 1});
  auto result = train_downstream(samples, pretrained.checkpoint, tiny_model(), head);

  auto frozen_params = result.model.encoder->parameters();
  auto original_params = before->parameters();
  REQUIRE(frozen_params.size() == original_params.size());
  for (size_t i = 0; i < frozen_params.size(); ++i) {
    CHECK(torch::equal(frozen_params[i], original_params[i]));
  }
  auto frozen_buffers = result.model.encoder->buffers();
  auto original_buffers = before->buffers();
  for (size_t i = 0; i < frozen_buffers.size(); ++i) {
    CHECK(torch::equal(frozen_buffers[i], original_buffers[i]));
  }
  CHECK_FALSE(result.model.encoder_digest.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("scratch mode trains without a checkpoint, frozen refuses") {
  auto dataset = generate_synthetic(tiny_spec(), 4, 16);
  auto samples = flatten_views(dataset, {0});

  HeadConfig head;
  head.hidden_size = 16;
  head.n_outputs = 4;
  head.mode = TrainMode::kScratch;
  head.epochs = 1;
  CHECK_NOTHROW(train_downstream(samples, std::nullopt, tiny_model(), head));

  head.mode = TrainMode::kFrozen;
  CHECK_THROWS_AS(train_downstream(samples, std::nullopt, tiny_model(), head),
                  std::invalid_argument);
}

TEST_CASE("fine-tune loss decreases on an overfit set") {
  auto dataset = generate_synthetic(tiny_spec(), 8, 16);
  PretextConfig pretext = {};
  pretext.model = tiny_model();
  pretext.epochs = 1;
  pretext.batch_size = 4;
  const auto dir = temp_dir("viewpose-finetune-test");
  auto pretrained = train(dataset, pretext, dir);

  HeadConfig head;
  head.hidden_size = 32;
  head.n_outputs = 4;
  head.mode = TrainMode::kFineTune;
  head.epochs = 5;
  head.batch_size = 4;
  head.learning_rate = 1e-3;
  auto result = train_downstream(flatten_views(dataset, {0, 1}), pretrained.checkpoint,
                                 tiny_model(), head);
  REQUIRE(result.epoch_train_loss.size() == 5);
  CHECK(result.epoch_train_loss.back() < result.epoch_train_loss.front());
  std::filesystem::remove_all(dir);
}

TEST_CASE("label validation") {
  std::vector<SequenceSample> samples{{std::vector<torch::Tensor>(16, torch::zeros({3, 16, 16})), 9}};
  HeadConfig head;
  head.n_outputs = 4;
  head.mode = TrainMode::kScratch;
  CHECK_THROWS_AS(train_downstream(samples, std::nullopt, tiny_model(), head),
                  std::invalid_argument);
}

TEST_CASE("head checkpoint round-trips") {
  torch::manual_seed(9);
  DownstreamModel model;
  model.model_config = tiny_model();
  model.head_config.hidden_size = 16;
  model.head_config.n_outputs = 5;
  model.head_config.quality_task = true;
  model.encoder = PoseEncoder(model.model_config);
  model.head = SequenceHead(12, 16, 5);
  model.encoder_digest = "abc123";

  const auto path = std::filesystem::temp_directory_path() / "viewpose-head-test.ckpt";
  save_head_checkpoint(path, model);
  auto loaded = load_head_checkpoint(path);
  CHECK(loaded.head_config.n_outputs == 5);
  CHECK(loaded.head_config.quality_task);
  CHECK(loaded.encoder_digest == "abc123");

  std::vector<torch::Tensor> frames(16, torch::rand({3, 16, 16}));
  auto a = classify_sequence(model, frames);
  auto b = classify_sequence(loaded, frames);
  CHECK(torch::equal(a, b));
  std::filesystem::remove(path);
}
