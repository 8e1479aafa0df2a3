#include "testing.hpp"

#include <filesystem>
#include <fstream>

#include "viewpose/checkpoint.hpp"
#include "viewpose/trainer.hpp"

using namespace viewpose;

namespace {

SyntheticSceneSpec tiny_spec() {
  SyntheticSceneSpec spec;
  spec.camera_azimuth_deg = {0.0, 90.0};
  spec.resolution = 16;
  spec.seed = 21;
  return spec;
}

PretextConfig tiny_config() {
  PretextConfig config;
  config.model = ModelConfig{4, 16, 0.5};
  config.batch_size = 2;
  config.epochs = 1;
  config.seed = 99;
  return config;
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("rotation source selection frequency is close to one half") {
  auto rng = make_rng(123, "eq1");
  int v_random = 0, w_random = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    auto sel = select_rotation_sources(rng);
    v_random += sel.v_from_random_frame ? 1 : 0;
    w_random += sel.w_from_random_frame ? 1 : 0;
  }
  const double v_fraction = 1.0 - static_cast<double>(v_random) / draws;
  const double w_fraction = 1.0 - static_cast<double>(w_random) / draws;
  CHECK(v_fraction > 0.48);
  CHECK(v_fraction < 0.52);
  CHECK(w_fraction > 0.48);
  CHECK(w_fraction < 0.52);
}

TEST_CASE("training step is deterministic given seed and data") {
  auto dataset = generate_synthetic(tiny_spec(), 4, 4);
  auto config = tiny_config();

  auto run_one = [&]() {
    torch::manual_seed(stream_seed(config.seed, "model-init"));
    AutoEncoder model(config.model);
    torch::optim::Adam optimizer(model->parameters(),
                                 torch::optim::AdamOptions(config.learning_rate));
    auto rng = make_rng(config.seed, "step");
    torch::manual_seed(stream_seed(config.seed, "torch-step"));
    std::vector<TrainingTuple> batch;
    for (int i = 0; i < 2; ++i) {
      batch.push_back(make_training_tuple(dataset.sequences[i], 0, 1, 1, rng));
    }
    return training_step(model, optimizer, batch, config.weights, config.toggles, rng);
  };

  auto a = run_one();
  auto b = run_one();
  CHECK(a.losses.total == b.losses.total);
  CHECK(a.losses.invar == b.losses.invar);
  CHECK(a.losses.equiv == b.losses.equiv);
  CHECK(a.losses.total ==
        doctest::Approx(a.losses.invar + 0.001 * a.losses.equiv + a.losses.rec1 +
                        a.losses.rec2));
}

TEST_CASE("loss decreases over 50 steps on a tiny overfit set") {
  auto dataset = generate_synthetic(tiny_spec(), 10, 2);
  auto config = tiny_config();
  config.learning_rate = 1e-3;

  torch::manual_seed(stream_seed(config.seed, "model-init"));
  AutoEncoder model(config.model);
  torch::optim::Adam optimizer(model->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  auto rng = make_rng(config.seed, "overfit");
  torch::manual_seed(stream_seed(config.seed, "torch-overfit"));

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    std::vector<TrainingTuple> batch;
    for (int i = 0; i < 5; ++i) {
      std::uniform_int_distribution<int64_t> frame(0, 1);
      batch.push_back(
          make_training_tuple(dataset.sequences[(step * 5 + i) % 10], 0, 1, frame(rng), rng));
    }
    auto metrics = training_step(model, optimizer, batch, config.weights, config.toggles, rng);
    if (step == 0) first = metrics.losses.total;
    last = metrics.losses.total;
  }
  CHECK(last < first);
}

TEST_CASE("train writes checkpoints and a metrics log") {
  auto dataset = generate_synthetic(tiny_spec(), 4, 3);
  auto config = tiny_config();
  config.epochs = 2;
  const auto out = temp_dir("viewpose-train-test");

  auto result = train(dataset, config, out);
  CHECK(std::filesystem::exists(result.checkpoint));
  CHECK(std::filesystem::exists(out / "ckpt-epoch-1.ckpt"));
  CHECK(std::filesystem::exists(out / "ckpt-epoch-2.ckpt"));
  CHECK(std::filesystem::exists(result.metrics));

  // 4 scenes x 1 view pair / batch 2 -> 2 steps per epoch.
  CHECK(result.step_metrics.size() == 4);

  std::ifstream metrics(result.metrics);
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) ++lines;
  CHECK(lines == 4);

  auto loaded = load_checkpoint(result.checkpoint);
  CHECK(loaded.epoch == 2);
  std::filesystem::remove_all(out);
}

TEST_CASE("resume reproduces the uninterrupted run") {
  auto dataset = generate_synthetic(tiny_spec(), 4, 3);
  auto config = tiny_config();
  config.epochs = 2;

  const auto full_dir = temp_dir("viewpose-resume-full");
  auto full = train(dataset, config, full_dir);

  const auto part_dir = temp_dir("viewpose-resume-part");
  auto part_config = config;
  part_config.epochs = 1;
  train(dataset, part_config, part_dir);
  auto resumed = train(dataset, config, part_dir, part_dir / "ckpt-epoch-1.ckpt");

  // Epoch-2 metrics of the resumed run match the uninterrupted one.
  REQUIRE(resumed.step_metrics.size() == 2);
  CHECK(resumed.step_metrics[0].losses.total == full.step_metrics[2].losses.total);
  CHECK(resumed.step_metrics[1].losses.total == full.step_metrics[3].losses.total);

  CHECK(file_digest(full.checkpoint) == file_digest(resumed.checkpoint));

  std::filesystem::remove_all(full_dir);
  std::filesystem::remove_all(part_dir);
}

TEST_CASE("identically seeded runs produce identical checkpoints") {
  auto dataset = generate_synthetic(tiny_spec(), 3, 2);
  auto config = tiny_config();

  const auto dir_a = temp_dir("viewpose-repro-a");
  const auto dir_b = temp_dir("viewpose-repro-b");
  auto a = train(dataset, config, dir_a);
  auto b = train(dataset, config, dir_b);
  CHECK(file_digest(a.checkpoint) == file_digest(b.checkpoint));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("rec-only toggles keep invar and equiv out of the objective") {
  auto dataset = generate_synthetic(tiny_spec(), 2, 2);
  auto config = tiny_config();
  config.toggles = LossToggles{false, false};

  torch::manual_seed(stream_seed(config.seed, "model-init"));
  AutoEncoder model(config.model);
  torch::optim::Adam optimizer(model->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  auto rng = make_rng(config.seed, "toggles");
  std::vector<TrainingTuple> batch{make_training_tuple(dataset.sequences[0], 0, 1, 0, rng)};
  auto metrics = training_step(model, optimizer, batch, config.weights, config.toggles, rng);
  CHECK(metrics.losses.invar == 0.0);
  CHECK(metrics.losses.equiv == 0.0);
  CHECK(metrics.losses.total == doctest::Approx(metrics.losses.rec1 + metrics.losses.rec2));
}

TEST_CASE("sweep reports one mean per size with a deterministic argmin") {
  auto dataset = generate_synthetic(tiny_spec(), 4, 2);
  auto config = tiny_config();

  const auto dir_a = temp_dir("viewpose-sweep-a");
  auto a = sweep_latent_size(dataset, {4, 8}, 2, config, dir_a);
  REQUIRE(a.sizes.size() == 2);
  REQUIRE(a.mean_total.size() == 2);
  CHECK((a.best_size == 4 || a.best_size == 8));

  const auto dir_b = temp_dir("viewpose-sweep-b");
  auto b = sweep_latent_size(dataset, {4, 8}, 2, config, dir_b);
  CHECK(a.mean_total == b.mean_total);
  CHECK(a.best_size == b.best_size);

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}
