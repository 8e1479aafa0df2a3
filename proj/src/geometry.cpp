#include "viewpose/geometry.hpp"

#include <stdexcept>

namespace viewpose {

namespace {

void check_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw std::invalid_argument(std::string(what) + " contains non-finite values");
  }
}

}  // namespace

void check_pose_shape(const torch::Tensor& pose) {
  const auto d = pose.dim();
  if ((d != 2 && d != 3) || pose.size(d - 2) != 3) {
    throw std::invalid_argument("pose must be 3xN or Bx3xN, got " +
                                std::to_string(d) + "d tensor");
  }
}

torch::Tensor euler_to_matrix(const torch::Tensor& angles) {
  if (angles.size(-1) != 3) {
    throw std::invalid_argument("euler angles must have size 3 in the last dimension");
  }
  check_finite(angles, "euler angles");

  const bool batched = angles.dim() == 2;
  auto a = batched ? angles : angles.unsqueeze(0);
  auto tx = a.select(1, 0);
  auto ty = a.select(1, 1);
  auto tz = a.select(1, 2);

  auto cx = tx.cos(), sx = tx.sin();
  auto cy = ty.cos(), sy = ty.sin();
  auto cz = tz.cos(), sz = tz.sin();

  // Row-major entries of Rz * Ry * Rx.
  auto r00 = cz * cy;
  auto r01 = cz * sy * sx - sz * cx;
  auto r02 = cz * sy * cx + sz * sx;
  auto r10 = sz * cy;
  auto r11 = sz * sy * sx + cz * cx;
  auto r12 = sz * sy * cx - cz * sx;
  auto r20 = -sy;
  auto r21 = cy * sx;
  auto r22 = cy * cx;

  auto m = torch::stack({torch::stack({r00, r01, r02}, 1), torch::stack({r10, r11, r12}, 1),
                         torch::stack({r20, r21, r22}, 1)},
                        1);
  return batched ? m : m.squeeze(0);
}

torch::Tensor apply_viewpoint(const torch::Tensor& pose, const torch::Tensor& rotation,
                              const torch::Tensor& translation) {
  check_pose_shape(pose);
  if (translation.size(-1) != 3) {
    throw std::invalid_argument("translation must have size 3 in the last dimension");
  }
  check_finite(translation, "translation");

  auto m = euler_to_matrix(rotation);
  if ((pose.dim() == 3) != (m.dim() == 3)) {
    throw std::invalid_argument("pose and viewpoint batch shapes do not match");
  }
  return torch::matmul(m, pose) + translation.unsqueeze(-1);
}

std::array<double, 3> pixel_shift_to_feature_shift(const ShiftVector& shift, int width,
                                                   int height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  return {2.0 * shift.dx_pixels / width, 2.0 * shift.dy_pixels / height, 0.0};
}

torch::Tensor shift_view_specific(const torch::Tensor& pose,
                                  const std::array<double, 3>& delta) {
  check_pose_shape(pose);
  auto d = torch::tensor({delta[0], delta[1], 0.0}, pose.options());
  return pose + d.unsqueeze(-1);
}

}  // namespace viewpose
