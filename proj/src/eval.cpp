#include "viewpose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "viewpose/geometry.hpp"
#include "viewpose/losses.hpp"

namespace viewpose {

std::string EvalReport::to_json() const {
  nlohmann::json j{{"metric", metric},
                   {"value", value},
                   {"sample_count", sample_count},
                   {"protocol", protocol},
                   {"breakdown", breakdown}};
  return j.dump(2);
}

void EvalReport::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << to_json() << '\n';
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("predictions and labels differ in length");
  }
  if (predictions.empty()) throw std::invalid_argument("accuracy of empty inputs");
  int64_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&values](size_t a, size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * (i + j) + 1.0;  // average of 1-based positions i..j
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - mean_a) * (b[i] - mean_b);
    var_a += (a[i] - mean_a) * (a[i] - mean_a);
    var_b += (b[i] - mean_b) * (b[i] - mean_b);
  }
  if (var_a == 0.0 || var_b == 0.0) {
    throw std::invalid_argument("rank correlation undefined: zero rank variance");
  }
  return cov / std::sqrt(var_a * var_b);
}

std::vector<int64_t> sampled_frames(int64_t length, int64_t limit) {
  if (limit <= 0 || limit >= length) {
    std::vector<int64_t> all(length);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  std::vector<int64_t> out;
  for (int64_t i = 0; i < limit; ++i) out.push_back(i * length / limit);
  return out;
}

}  // namespace

double spearman_rank_correlation(const std::vector<double>& predicted,
                                 const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("predicted and truth differ in length");
  }
  if (predicted.size() < 2) {
    throw std::invalid_argument("rank correlation needs at least 2 samples");
  }
  return pearson(average_ranks(predicted), average_ranks(truth));
}

double cross_view_invariance(AutoEncoder model, const MultiViewDataset& dataset,
                             int64_t frames_per_sequence) {
  if (dataset.sequences.empty()) throw std::invalid_argument("empty dataset");
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();

  double sum = 0.0;
  int64_t count = 0;
  for (const auto& seq : dataset.sequences) {
    const auto frames = sampled_frames(seq.frame_count(), frames_per_sequence);
    for (size_t v = 0; v < seq.views.size(); ++v) {
      for (size_t w = v + 1; w < seq.views.size(); ++w) {
        std::vector<torch::Tensor> a, b;
        for (int64_t f : frames) {
          a.push_back(seq.views[v].frames[f]);
          b.push_back(seq.views[w].frames[f]);
        }
        auto pose_a = model->encode_pose(torch::stack(a));
        auto pose_b = model->encode_pose(torch::stack(b));
        sum += (pose_a - pose_b).square().mean({1, 2}).sum().item<double>();
        count += static_cast<int64_t>(frames.size());
      }
    }
  }
  if (was_training) model->train();
  return sum / static_cast<double>(count);
}

double equivariance_residual(AutoEncoder model, const MultiViewDataset& dataset, Rng& rng,
                             int64_t frames_per_sequence) {
  if (dataset.sequences.empty()) throw std::invalid_argument("empty dataset");
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();

  const int64_t res = dataset.resolution;
  std::uniform_int_distribution<int> shift_dist(-static_cast<int>(res / 4),
                                                static_cast<int>(res / 4));

  double sum = 0.0;
  int64_t count = 0;
  for (const auto& seq : dataset.sequences) {
    const auto frames = sampled_frames(seq.frame_count(), frames_per_sequence);
    for (const auto& view : seq.views) {
      for (int64_t f : frames) {
        const ShiftVector shift{shift_dist(rng), shift_dist(rng)};
        const auto delta =
            pixel_shift_to_feature_shift(shift, static_cast<int>(res), static_cast<int>(res));
        auto image = view.frames[f].unsqueeze(0);
        auto augmented = shift_image(view.frames[f], shift).unsqueeze(0);

        auto pose = model->encode_pose(image);
        auto aug_pose = model->encode_pose(augmented);
        auto [rotation, translation] = model->encode_viewpoint(image);
        auto [aug_rotation, aug_translation] = model->encode_viewpoint(augmented);

        // Augmented pose uses the original frame's rotation, its own translation.
        auto specific = apply_viewpoint(pose, rotation, translation);
        auto aug_specific = apply_viewpoint(aug_pose, rotation, aug_translation);
        sum += mse(shift_view_specific(specific, delta), aug_specific).item<double>();
        ++count;
      }
    }
  }
  if (was_training) model->train();
  return sum / static_cast<double>(count);
}

}  // namespace viewpose
