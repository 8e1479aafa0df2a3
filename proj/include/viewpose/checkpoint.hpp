#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>

#include "viewpose/model.hpp"

namespace viewpose {

inline constexpr const char* kCheckpointHeader = "viewpose-ckpt-v1";
inline constexpr const char* kHeadCheckpointHeader = "viewpose-head-v1";

// Single binary blob: header line, ModelConfig echo, epoch counter, then the
// three sub-networks' weights and (optionally) optimizer state.
void save_checkpoint(const std::filesystem::path& path, AutoEncoder model, int64_t epoch,
                     torch::optim::Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
  ModelConfig config;
  AutoEncoder model{nullptr};
  int64_t epoch = 0;
  std::string optimizer_blob;  // empty when the checkpoint carries no optimizer state

  void restore_optimizer(torch::optim::Optimizer& optimizer) const;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// SHA-256-free stable digest of a file's bytes (FNV-1a 64), for reproducibility checks.
std::string file_digest(const std::filesystem::path& path);

namespace detail {
std::string module_to_bytes(const torch::nn::Module& module);
void bytes_to_module(const std::string& bytes, torch::nn::Module& module);
void write_blob(std::ostream& out, const std::string& blob);
std::string read_blob(std::istream& in);
}  // namespace detail

}  // namespace viewpose
