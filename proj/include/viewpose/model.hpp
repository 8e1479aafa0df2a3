#pragma once

#include <torch/torch.h>

#include <utility>

namespace viewpose {

struct ModelConfig {
  int64_t n_features = 70;   // N, columns of the 3xN canonical pose
  int64_t resolution = 128;  // square input images
  double dropout_rate = 0.5;

  void validate() const;
  int64_t grid() const { return resolution / 8; }  // spatial size at the bottleneck
};

// Convolutional encoder producing the canonical 3xN pose matrix.
class PoseEncoderImpl : public torch::nn::Module {
 public:
  explicit PoseEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& images);  // Bx3xHxW -> Bx3xN

 private:
  ModelConfig config_;
  torch::nn::Sequential conv_{nullptr};
  torch::nn::Sequential fc_{nullptr};
};
TORCH_MODULE(PoseEncoder);

// Viewpoint head: 6 unconstrained reals per image, split as rotation radians
// (first 3) and translation (last 3).
class ViewpointEncoderImpl : public torch::nn::Module {
 public:
  explicit ViewpointEncoderImpl(const ModelConfig& config);
  // Bx3xHxW -> (Bx3 rotation, Bx3 translation)
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& images);

 private:
  ModelConfig config_;
  torch::nn::Sequential conv_{nullptr};
  torch::nn::Sequential fc_{nullptr};
};
TORCH_MODULE(ViewpointEncoder);

// Decoder from a (flattened) view-specific pose back to an image, tanh output.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& pose);  // Bx3xN -> Bx3xHxW

 private:
  ModelConfig config_;
  torch::nn::Sequential fc_{nullptr};
  torch::nn::Sequential deconv_{nullptr};
};
TORCH_MODULE(Decoder);

// The full disentangling auto-encoder: pose encoder, viewpoint encoder,
// decoder, composed around the rigid-transform latent.
class AutoEncoderImpl : public torch::nn::Module {
 public:
  explicit AutoEncoderImpl(const ModelConfig& config);

  torch::Tensor encode_pose(const torch::Tensor& images);
  std::pair<torch::Tensor, torch::Tensor> encode_viewpoint(const torch::Tensor& images);
  torch::Tensor decode(const torch::Tensor& pose);

  // D(R * E_pose(image) + T) with the rotation taken from rotation_source and
  // the translation from the image itself.
  torch::Tensor reconstruct(const torch::Tensor& images, const torch::Tensor& rotation_source);

  const ModelConfig& config() const { return config_; }
  PoseEncoder pose_encoder() { return pose_encoder_; }
  ViewpointEncoder viewpoint_encoder() { return viewpoint_encoder_; }
  Decoder decoder() { return decoder_; }

 private:
  void check_images(const torch::Tensor& images) const;

  ModelConfig config_;
  PoseEncoder pose_encoder_{nullptr};
  ViewpointEncoder viewpoint_encoder_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(AutoEncoder);

}  // namespace viewpose
