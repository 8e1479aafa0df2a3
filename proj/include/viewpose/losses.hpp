#pragma once

#include <torch/torch.h>

#include "viewpose/model.hpp"

namespace viewpose {

struct LossWeights {
  double alpha = 1.0;   // view-invariant term
  double beta = 0.001;  // equivariance term
  double gamma = 1.0;   // both reconstruction terms

  void validate() const;
};

struct LossBreakdown {
  double invar = 0.0;
  double equiv = 0.0;
  double rec1 = 0.0;
  double rec2 = 0.0;
  double total = 0.0;
};

// Mean over all elements of squared differences.
torch::Tensor mse(const torch::Tensor& a, const torch::Tensor& b);

// Sum over the two views of MSE(target image, reconstruction). Used for the
// view-invariant loss (swapped-pose reconstructions), rec1 (plain
// reconstructions) and rec2 (augmented-frame reconstructions) alike.
torch::Tensor paired_reconstruction_loss(const torch::Tensor& image_v,
                                         const torch::Tensor& image_w,
                                         const torch::Tensor& recon_v,
                                         const torch::Tensor& recon_w);

// Cross-reconstruction: view v is decoded from view w's canonical pose under
// v's viewpoint (and vice versa), then compared to the original images.
torch::Tensor view_invariant_loss(Decoder decoder,
                                  const torch::Tensor& image_v, const torch::Tensor& image_w,
                                  const torch::Tensor& rotation_v,
                                  const torch::Tensor& rotation_w,
                                  const torch::Tensor& translation_v,
                                  const torch::Tensor& translation_w,
                                  const torch::Tensor& pose_v, const torch::Tensor& pose_w);

// Sum over the two views of MSE(shifted view-specific pose, pose of the
// shifted image). delta_* come from pixel_shift_to_feature_shift.
torch::Tensor equivariance_loss(const torch::Tensor& pose_v, const torch::Tensor& pose_w,
                                const torch::Tensor& augmented_pose_v,
                                const torch::Tensor& augmented_pose_w,
                                const std::array<double, 3>& delta_v,
                                const std::array<double, 3>& delta_w);

// Weighted combination: alpha * invar + beta * equiv + gamma * (rec1 + rec2).
torch::Tensor total_loss(const torch::Tensor& invar, const torch::Tensor& equiv,
                         const torch::Tensor& rec1, const torch::Tensor& rec2,
                         const LossWeights& weights);

LossBreakdown make_breakdown(double invar, double equiv, double rec1, double rec2,
                             const LossWeights& weights);

}  // namespace viewpose
