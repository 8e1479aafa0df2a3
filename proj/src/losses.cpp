#include "viewpose/losses.hpp"

#include <stdexcept>

#include "viewpose/geometry.hpp"
#include "viewpose/model.hpp"

namespace viewpose {

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

torch::Tensor mse(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.sizes().equals(b.sizes())) {
    throw std::invalid_argument("mse operands must have identical shapes");
  }
  return (a - b).square().mean();
}

torch::Tensor paired_reconstruction_loss(const torch::Tensor& image_v,
                                         const torch::Tensor& image_w,
                                         const torch::Tensor& recon_v,
                                         const torch::Tensor& recon_w) {
  return mse(image_v, recon_v) + mse(image_w, recon_w);
}

torch::Tensor view_invariant_loss(Decoder decoder,
                                  const torch::Tensor& image_v, const torch::Tensor& image_w,
                                  const torch::Tensor& rotation_v,
                                  const torch::Tensor& rotation_w,
                                  const torch::Tensor& translation_v,
                                  const torch::Tensor& translation_w,
                                  const torch::Tensor& pose_v, const torch::Tensor& pose_w) {
  auto swapped_v = decoder->forward(apply_viewpoint(pose_w, rotation_v, translation_v));
  auto swapped_w = decoder->forward(apply_viewpoint(pose_v, rotation_w, translation_w));
  return paired_reconstruction_loss(image_v, image_w, swapped_v, swapped_w);
}

torch::Tensor equivariance_loss(const torch::Tensor& pose_v, const torch::Tensor& pose_w,
                                const torch::Tensor& augmented_pose_v,
                                const torch::Tensor& augmented_pose_w,
                                const std::array<double, 3>& delta_v,
                                const std::array<double, 3>& delta_w) {
  return mse(shift_view_specific(pose_v, delta_v), augmented_pose_v) +
         mse(shift_view_specific(pose_w, delta_w), augmented_pose_w);
}

torch::Tensor total_loss(const torch::Tensor& invar, const torch::Tensor& equiv,
                         const torch::Tensor& rec1, const torch::Tensor& rec2,
                         const LossWeights& weights) {
  weights.validate();
  return weights.alpha * invar + weights.beta * equiv + weights.gamma * (rec1 + rec2);
}

LossBreakdown make_breakdown(double invar, double equiv, double rec1, double rec2,
                             const LossWeights& weights) {
  weights.validate();
  LossBreakdown b;
  b.invar = invar;
  b.equiv = equiv;
  b.rec1 = rec1;
  b.rec2 = rec2;
  b.total = weights.alpha * invar + weights.beta * equiv + weights.gamma * (rec1 + rec2);
  return b;
}

}  // namespace viewpose
