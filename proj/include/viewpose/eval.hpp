#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "viewpose/data.hpp"
#include "viewpose/model.hpp"

namespace viewpose {

struct EvalReport {
  std::string metric;
  double value = 0.0;
  int64_t sample_count = 0;
  std::string protocol;  // "CV" | "CS" | ""
  std::map<std::string, double> breakdown;

  void write(const std::filesystem::path& path) const;
  std::string to_json() const;
};

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Pearson correlation of rank vectors; ties get average ranks. Throws on
// fewer than 2 samples or zero rank variance.
double spearman_rank_correlation(const std::vector<double>& predicted,
                                 const std::vector<double>& truth);

// Mean over simultaneous view pairs of MSE between canonical poses. Lower is
// more view-invariant. frames_per_sequence limits the evenly spaced frames
// sampled per sequence (0 = all).
double cross_view_invariance(AutoEncoder model, const MultiViewDataset& dataset,
                             int64_t frames_per_sequence = 4);

// Mean MSE between shifted view-specific poses and the poses of shifted
// images, over rng-sampled pixel shifts.
double equivariance_residual(AutoEncoder model, const MultiViewDataset& dataset, Rng& rng,
                             int64_t frames_per_sequence = 4);

}  // namespace viewpose
