#include "viewpose/trainer.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "viewpose/checkpoint.hpp"
#include "viewpose/geometry.hpp"

namespace viewpose {

namespace fs = std::filesystem;

void PretextConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  weights.validate();
  model.validate();
}

RotationSelection select_rotation_sources(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RotationSelection sel;
  sel.v_from_random_frame = unit(rng) >= 0.5;
  sel.w_from_random_frame = unit(rng) >= 0.5;
  return sel;
}

namespace {

struct ForwardLosses {
  torch::Tensor invar, equiv, rec1, rec2, total;
};

void check_component(const torch::Tensor& value, const char* name) {
  if (!torch::isfinite(value).item<bool>()) {
    throw std::runtime_error(std::string("non-finite loss component: ") + name);
  }
}

// Full Eq. 2-8 assembly for one batch. Rotation-source selection is drawn per
// tuple from rng; deltas are the feature-space images of c1/c2.
ForwardLosses forward_losses(AutoEncoder model, const std::vector<TrainingTuple>& batch,
                             const LossWeights& weights, const LossToggles& toggles,
                             Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto b = static_cast<int64_t>(batch.size());
  const int64_t width = batch.front().image_v.size(2);
  const int64_t height = batch.front().image_v.size(1);

  std::vector<torch::Tensor> iv, iw, mv, nw, av, aw;
  auto delta_v = torch::zeros({b, 3});
  auto delta_w = torch::zeros({b, 3});
  auto mask_v = torch::zeros({b, 1}, torch::kBool);
  auto mask_w = torch::zeros({b, 1}, torch::kBool);
  for (int64_t i = 0; i < b; ++i) {
    const auto& t = batch[i];
    iv.push_back(t.image_v);
    iw.push_back(t.image_w);
    mv.push_back(t.rotation_source_v);
    nw.push_back(t.rotation_source_w);
    av.push_back(t.augmented_v);
    aw.push_back(t.augmented_w);
    const auto dv = pixel_shift_to_feature_shift(t.c1, width, height);
    const auto dw = pixel_shift_to_feature_shift(t.c2, width, height);
    delta_v[i] = torch::tensor({dv[0], dv[1], dv[2]});
    delta_w[i] = torch::tensor({dw[0], dw[1], dw[2]});
    const auto sel = select_rotation_sources(rng);
    mask_v[i][0] = sel.v_from_random_frame;
    mask_w[i][0] = sel.w_from_random_frame;
  }
  const auto dtype = model->parameters().front().dtype();
  auto images_v = torch::stack(iv).to(dtype);
  auto images_w = torch::stack(iw).to(dtype);
  auto aug_v = torch::stack(av).to(dtype);
  auto aug_w = torch::stack(aw).to(dtype);
  delta_v = delta_v.to(dtype);
  delta_w = delta_w.to(dtype);

  auto poses = model->encode_pose(torch::cat({images_v, images_w, aug_v, aug_w}));
  auto pose_v = poses.narrow(0, 0, b);
  auto pose_w = poses.narrow(0, b, b);
  auto aug_pose_v = poses.narrow(0, 2 * b, b);
  auto aug_pose_w = poses.narrow(0, 3 * b, b);

  auto [rotations, translations] = model->encode_viewpoint(torch::cat(
      {images_v, images_w, torch::stack(mv).to(dtype), torch::stack(nw).to(dtype), aug_v, aug_w}));
  auto rot_k_v = rotations.narrow(0, 0, b);
  auto rot_k_w = rotations.narrow(0, b, b);
  auto rot_m_v = rotations.narrow(0, 2 * b, b);
  auto rot_n_w = rotations.narrow(0, 3 * b, b);
  auto trans_k_v = translations.narrow(0, 0, b);
  auto trans_k_w = translations.narrow(0, b, b);
  auto trans_aug_v = translations.narrow(0, 4 * b, b);
  auto trans_aug_w = translations.narrow(0, 5 * b, b);

  // Eq. 1: translation always comes from frame k, rotation possibly from m/n.
  auto rot_v = torch::where(mask_v, rot_m_v, rot_k_v);
  auto rot_w = torch::where(mask_w, rot_n_w, rot_k_w);

  auto specific_v = apply_viewpoint(pose_v, rot_v, trans_k_v);
  auto specific_w = apply_viewpoint(pose_w, rot_w, trans_k_w);

  auto recon = model->decode(torch::cat({specific_v, specific_w}));
  auto rec1 = paired_reconstruction_loss(images_v, images_w, recon.narrow(0, 0, b),
                                         recon.narrow(0, b, b));

  ForwardLosses out;
  out.rec1 = rec1;

  if (toggles.invar) {
    // Swap canonical poses across the two views, keep each view's viewpoint.
    auto swapped_v = apply_viewpoint(pose_w, rot_v, trans_k_v);
    auto swapped_w = apply_viewpoint(pose_v, rot_w, trans_k_w);
    auto swapped = model->decode(torch::cat({swapped_v, swapped_w}));
    out.invar = paired_reconstruction_loss(images_v, images_w, swapped.narrow(0, 0, b),
                                           swapped.narrow(0, b, b));
  }

  // Augmented frames keep the view's selected rotation but their own translation.
  auto aug_specific_v = apply_viewpoint(aug_pose_v, rot_v, trans_aug_v);
  auto aug_specific_w = apply_viewpoint(aug_pose_w, rot_w, trans_aug_w);

  if (toggles.equiv) {
    out.equiv = mse(specific_v + delta_v.unsqueeze(-1), aug_specific_v) +
                mse(specific_w + delta_w.unsqueeze(-1), aug_specific_w);
  }

  auto aug_recon = model->decode(torch::cat({aug_specific_v, aug_specific_w}));
  out.rec2 = paired_reconstruction_loss(aug_v, aug_w, aug_recon.narrow(0, 0, b),
                                        aug_recon.narrow(0, b, b));

  auto zero = torch::zeros({}, rec1.options());
  auto invar = toggles.invar ? out.invar : zero;
  auto equiv = toggles.equiv ? out.equiv : zero;
  out.total = total_loss(invar, equiv, out.rec1, out.rec2, weights);

  check_component(invar, "invar");
  check_component(equiv, "equiv");
  check_component(out.rec1, "rec1");
  check_component(out.rec2, "rec2");
  check_component(out.total, "total");
  if (!toggles.invar) out.invar = zero;
  if (!toggles.equiv) out.equiv = zero;
  return out;
}

LossBreakdown to_breakdown(const ForwardLosses& losses, const LossWeights& weights) {
  return make_breakdown(losses.invar.item<double>(), losses.equiv.item<double>(),
                        losses.rec1.item<double>(), losses.rec2.item<double>(), weights);
}

}  // namespace

StepMetrics training_step(AutoEncoder model, torch::optim::Optimizer& optimizer,
                          const std::vector<TrainingTuple>& batch, const LossWeights& weights,
                          const LossToggles& toggles, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  model->train();
  optimizer.zero_grad();
  auto losses = forward_losses(model, batch, weights, toggles, rng);
  losses.total.backward();
  optimizer.step();

  StepMetrics metrics;
  metrics.losses = to_breakdown(losses, weights);
  metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

LossBreakdown evaluate_loss(AutoEncoder model, const std::vector<TrainingTuple>& batch,
                            const LossWeights& weights, const LossToggles& toggles, Rng& rng) {
  const bool was_training = model->is_training();
  model->eval();
  LossBreakdown breakdown;
  {
    torch::NoGradGuard no_grad;
    breakdown = to_breakdown(forward_losses(model, batch, weights, toggles, rng), weights);
  }
  if (was_training) model->train();
  return breakdown;
}

namespace {

void append_metrics(const fs::path& path, const std::vector<StepMetrics>& metrics,
                    size_t from) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open metrics log: " + path.string());
  for (size_t i = from; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    nlohmann::json rec{{"step", m.step},       {"epoch", m.epoch},
                       {"invar", m.losses.invar}, {"equiv", m.losses.equiv},
                       {"rec1", m.losses.rec1},   {"rec2", m.losses.rec2},
                       {"total", m.losses.total}, {"wall_time", m.wall_time_s}};
    out << rec.dump() << '\n';
  }
}

struct TupleJob {
  size_t sequence;
  int view_v, view_w;
};

std::vector<TupleJob> all_view_pair_jobs(const MultiViewDataset& dataset) {
  std::vector<TupleJob> jobs;
  for (size_t s = 0; s < dataset.sequences.size(); ++s) {
    const int views = static_cast<int>(dataset.sequences[s].views.size());
    for (int v = 0; v < views; ++v) {
      for (int w = v + 1; w < views; ++w) jobs.push_back({s, v, w});
    }
  }
  return jobs;
}

}  // namespace

TrainResult train(const MultiViewDataset& dataset, const PretextConfig& config,
                  const fs::path& out_dir,
                  const std::optional<fs::path>& resume_from) {
  config.validate();
  dataset.validate();
  if (dataset.sequences.empty()) throw std::invalid_argument("empty dataset");
  fs::create_directories(out_dir);

  AutoEncoder model{nullptr};
  int64_t start_epoch = 0;
  std::optional<LoadedCheckpoint> loaded;
  if (resume_from) {
    loaded = load_checkpoint(*resume_from);
    model = loaded->model;
    start_epoch = loaded->epoch;
  } else {
    torch::manual_seed(stream_seed(config.seed, "model-init"));
    model = AutoEncoder(config.model);
  }
  torch::optim::Adam optimizer(model->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  if (loaded) loaded->restore_optimizer(optimizer);

  TrainResult result;
  result.metrics = out_dir / "metrics.jsonl";
  if (!resume_from && fs::exists(result.metrics)) fs::remove(result.metrics);

  const auto jobs = all_view_pair_jobs(dataset);
  int64_t step = start_epoch * ((static_cast<int64_t>(jobs.size()) + config.batch_size - 1) /
                                config.batch_size);

  for (int64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    // Per-epoch streams make resumed runs reproduce uninterrupted ones.
    auto rng = make_rng(config.seed, "training-epoch-" + std::to_string(epoch));
    torch::manual_seed(stream_seed(config.seed, "torch-epoch-" + std::to_string(epoch)));

    auto order = jobs;
    std::shuffle(order.begin(), order.end(), rng);

    const size_t flushed = result.step_metrics.size();
    for (size_t offset = 0; offset < order.size(); offset += config.batch_size) {
      std::vector<TrainingTuple> batch;
      const size_t end = std::min(order.size(), offset + config.batch_size);
      for (size_t i = offset; i < end; ++i) {
        const auto& job = order[i];
        const auto& seq = dataset.sequences[job.sequence];
        std::uniform_int_distribution<int64_t> frame(0, seq.frame_count() - 1);
        batch.push_back(make_training_tuple(seq, job.view_v, job.view_w, frame(rng), rng));
      }
      auto metrics = training_step(model, optimizer, batch, config.weights, config.toggles, rng);
      metrics.step = step++;
      metrics.epoch = epoch;
      result.step_metrics.push_back(metrics);
    }
    append_metrics(result.metrics, result.step_metrics, flushed);

    save_checkpoint(out_dir / ("ckpt-epoch-" + std::to_string(epoch + 1) + ".ckpt"), model,
                    epoch + 1, &optimizer);
  }

  result.checkpoint = out_dir / "checkpoint.ckpt";
  save_checkpoint(result.checkpoint, model, config.epochs, &optimizer);
  return result;
}

SweepResult sweep_latent_size(const MultiViewDataset& dataset, std::vector<int64_t> sizes,
                              int folds, const PretextConfig& base_config,
                              const fs::path& work_dir) {
  if (sizes.empty()) throw std::invalid_argument("sweep requires at least one size");
  if (folds < 1) throw std::invalid_argument("folds must be >= 1");
  dataset.validate();

  SweepResult result;
  result.sizes = sizes;

  for (int64_t n : sizes) {
    double sum = 0.0;
    int evaluated = 0;
    for (int fold = 0; fold < folds; ++fold) {
      // Whole scenes held out per fold: frames within a scene are correlated.
      MultiViewDataset train_split{{}, dataset.views_per_scene, dataset.resolution,
                                   dataset.modality};
      MultiViewDataset val_split = train_split;
      for (size_t s = 0; s < dataset.sequences.size(); ++s) {
        auto& target = (folds > 1 && static_cast<int>(s % folds) == fold) ? val_split
                                                                          : train_split;
        target.sequences.push_back(dataset.sequences[s]);
      }
      if (folds == 1) val_split = train_split;
      if (train_split.sequences.empty() || val_split.sequences.empty()) continue;

      PretextConfig config = base_config;
      config.model.n_features = n;
      auto run = train(train_split, config,
                       work_dir / ("sweep-n" + std::to_string(n) + "-fold" +
                                   std::to_string(fold)));
      auto model = load_checkpoint(run.checkpoint).model;

      auto rng = make_rng(config.seed, "sweep-validation");
      std::vector<TrainingTuple> batch;
      double fold_sum = 0.0;
      int batches = 0;
      const auto jobs = all_view_pair_jobs(val_split);
      for (const auto& job : jobs) {
        const auto& seq = val_split.sequences[job.sequence];
        std::uniform_int_distribution<int64_t> frame(0, seq.frame_count() - 1);
        batch.push_back(make_training_tuple(seq, job.view_v, job.view_w, frame(rng), rng));
        if (batch.size() == static_cast<size_t>(config.batch_size)) {
          fold_sum += evaluate_loss(model, batch, config.weights, config.toggles, rng).total;
          ++batches;
          batch.clear();
        }
      }
      if (!batch.empty()) {
        fold_sum += evaluate_loss(model, batch, config.weights, config.toggles, rng).total;
        ++batches;
      }
      sum += fold_sum / std::max(batches, 1);
      ++evaluated;
    }
    result.mean_total.push_back(sum / std::max(evaluated, 1));
  }

  const auto best = std::min_element(result.mean_total.begin(), result.mean_total.end());
  result.best_size = result.sizes[std::distance(result.mean_total.begin(), best)];
  return result;
}

}  // namespace viewpose
