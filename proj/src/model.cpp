#include "viewpose/model.hpp"

#include <stdexcept>

#include "viewpose/geometry.hpp"

namespace viewpose {

namespace nn = torch::nn;

void ModelConfig::validate() const {
  if (n_features <= 0) throw std::invalid_argument("n_features must be positive");
  if (resolution <= 0 || resolution % 8 != 0) {
    throw std::invalid_argument("resolution must be positive and divisible by 8");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("dropout_rate must be in [0, 1)");
  }
}

namespace {

void add_conv_bn_relu(nn::Sequential& seq, int64_t in, int64_t out, int64_t kernel) {
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel).padding(kernel / 2)));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::ReLU());
}

}  // namespace

PoseEncoderImpl::PoseEncoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  conv_ = nn::Sequential();
  add_conv_bn_relu(conv_, 3, 64, 3);
  add_conv_bn_relu(conv_, 64, 64, 3);
  conv_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
  add_conv_bn_relu(conv_, 64, 128, 3);
  add_conv_bn_relu(conv_, 128, 128, 3);
  conv_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
  add_conv_bn_relu(conv_, 128, 256, 3);
  add_conv_bn_relu(conv_, 256, 256, 3);
  conv_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
  add_conv_bn_relu(conv_, 256, 512, 3);
  conv_->push_back(nn::Conv2d(nn::Conv2dOptions(512, 512, 3).padding(1)));
  conv_->push_back(nn::ReLU());

  const int64_t flat = config_.grid() * config_.grid() * 512;
  fc_ = nn::Sequential(nn::Linear(flat, 1024), nn::ReLU(), nn::Linear(1024, 512), nn::ReLU(),
                       nn::Linear(512, 3 * config_.n_features));

  register_module("conv", conv_);
  register_module("fc", fc_);
}

torch::Tensor PoseEncoderImpl::forward(const torch::Tensor& images) {
  auto features = conv_->forward(images).flatten(1);
  return fc_->forward(features).view({images.size(0), 3, config_.n_features});
}

ViewpointEncoderImpl::ViewpointEncoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  conv_ = nn::Sequential();
  add_conv_bn_relu(conv_, 3, 128, 5);
  add_conv_bn_relu(conv_, 128, 128, 5);
  conv_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(7).stride(7)));
  add_conv_bn_relu(conv_, 128, 256, 5);
  add_conv_bn_relu(conv_, 256, 256, 5);
  // Global average pooling keeps the head independent of resolution.
  conv_->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)));

  fc_ = nn::Sequential(nn::Linear(256, 512), nn::ReLU(), nn::Dropout(config_.dropout_rate),
                       nn::Linear(512, 6));

  register_module("conv", conv_);
  register_module("fc", fc_);
}

std::pair<torch::Tensor, torch::Tensor> ViewpointEncoderImpl::forward(
    const torch::Tensor& images) {
  auto out = fc_->forward(conv_->forward(images).flatten(1));
  return {out.narrow(1, 0, 3), out.narrow(1, 3, 3)};
}

DecoderImpl::DecoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int64_t grid = config_.grid();
  fc_ = nn::Sequential(nn::Linear(3 * config_.n_features, grid * grid * 512), nn::ReLU(),
                       nn::Dropout(config_.dropout_rate));

  auto add_deconv_pair = [this](int64_t in, int64_t out, bool final_pair) {
    deconv_->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1)));
    if (!final_pair) {
      deconv_->push_back(nn::BatchNorm2d(out));
    }
    deconv_->push_back(nn::ReLU());
    deconv_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(out, out, 3).padding(1)));
    if (!final_pair) {
      deconv_->push_back(nn::BatchNorm2d(out));
      deconv_->push_back(nn::ReLU());
    }
    // The last layer keeps only tanh: BN/ReLU there would clip negative pixels.
  };

  deconv_ = nn::Sequential();
  add_conv_bn_relu(deconv_, 512, 256, 3);
  add_conv_bn_relu(deconv_, 256, 256, 3);
  add_deconv_pair(256, 128, false);
  add_deconv_pair(128, 64, false);
  add_deconv_pair(64, 3, true);
  deconv_->push_back(nn::Tanh());

  register_module("fc", fc_);
  register_module("deconv", deconv_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& pose) {
  check_pose_shape(pose);
  if (pose.size(-1) != config_.n_features) {
    throw std::invalid_argument("pose has " + std::to_string(pose.size(-1)) +
                                " features, decoder expects " +
                                std::to_string(config_.n_features));
  }
  const int64_t grid = config_.grid();
  const bool batched = pose.dim() == 3;
  auto flat = batched ? pose.flatten(1) : pose.flatten().unsqueeze(0);
  auto x = fc_->forward(flat).view({flat.size(0), 512, grid, grid});
  auto out = deconv_->forward(x);
  return batched ? out : out.squeeze(0);
}

AutoEncoderImpl::AutoEncoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  pose_encoder_ = PoseEncoder(config_);
  viewpoint_encoder_ = ViewpointEncoder(config_);
  decoder_ = Decoder(config_);
  register_module("pose_encoder", pose_encoder_);
  register_module("viewpoint_encoder", viewpoint_encoder_);
  register_module("decoder", decoder_);
}

void AutoEncoderImpl::check_images(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != config_.resolution ||
      images.size(3) != config_.resolution) {
    throw std::invalid_argument("expected Bx3x" + std::to_string(config_.resolution) + "x" +
                                std::to_string(config_.resolution) + " images");
  }
}

torch::Tensor AutoEncoderImpl::encode_pose(const torch::Tensor& images) {
  check_images(images);
  return pose_encoder_->forward(images);
}

std::pair<torch::Tensor, torch::Tensor> AutoEncoderImpl::encode_viewpoint(
    const torch::Tensor& images) {
  check_images(images);
  return viewpoint_encoder_->forward(images);
}

torch::Tensor AutoEncoderImpl::decode(const torch::Tensor& pose) {
  return decoder_->forward(pose);
}

torch::Tensor AutoEncoderImpl::reconstruct(const torch::Tensor& images,
                                           const torch::Tensor& rotation_source) {
  auto pose = encode_pose(images);
  auto [rotation, unused_translation] = encode_viewpoint(rotation_source);
  auto [unused_rotation, translation] = encode_viewpoint(images);
  auto view_specific = apply_viewpoint(pose, rotation, translation);
  return decode(view_specific);
}

}  // namespace viewpose
