#pragma once

#include <torch/torch.h>

#include <array>

namespace viewpose {

// Pixel-space positional shift of an image (c_j). Positive dx moves the
// subject to the right, positive dy moves it down.
struct ShiftVector {
  int dx_pixels = 0;
  int dy_pixels = 0;
};

// Canonical pose features live in a 3xN matrix (rows x, y, z; one column per
// feature point). View-specific poses share the layout. Both are plain
// tensors; batched variants carry a leading batch dimension (Bx3xN).

// Rz(tz) * Ry(ty) * Rx(tx) from an Euler angle tensor of shape (3,) or (B,3).
// Built from differentiable ops so gradients flow to the angles.
torch::Tensor euler_to_matrix(const torch::Tensor& angles);

// R * P + T with R from Euler angles. pose is 3xN or Bx3xN, rotation (3,) or
// (B,3), translation likewise. Translation broadcasts over columns.
torch::Tensor apply_viewpoint(const torch::Tensor& pose, const torch::Tensor& rotation,
                              const torch::Tensor& translation);

// Feature x/y axes coincide with image axes, normalized so the image spans
// [-1, 1] per axis. z is unaffected by in-plane shifts.
std::array<double, 3> pixel_shift_to_feature_shift(const ShiftVector& shift, int width,
                                                   int height);

// Adds dx to the x-row and dy to the y-row of a 3xN (or Bx3xN) pose.
torch::Tensor shift_view_specific(const torch::Tensor& pose,
                                  const std::array<double, 3>& delta);

void check_pose_shape(const torch::Tensor& pose);

}  // namespace viewpose
