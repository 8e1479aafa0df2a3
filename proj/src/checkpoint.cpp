#include "viewpose/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace viewpose {

namespace detail {

std::string module_to_bytes(const torch::nn::Module& module) {
  std::string bytes;
  torch::serialize::OutputArchive archive;
  const_cast<torch::nn::Module&>(module).save(archive);
  archive.save_to([&bytes](const void* data, size_t size) {
    bytes.append(static_cast<const char*>(data), size);
    return size;
  });
  return bytes;
}

void bytes_to_module(const std::string& bytes, torch::nn::Module& module) {
  torch::serialize::InputArchive archive;
  archive.load_from(bytes.data(), bytes.size());
  module.load(archive);
}

void write_blob(std::ostream& out, const std::string& blob) {
  const uint64_t size = blob.size();
  out.write(reinterpret_cast<const char*>(&size), sizeof(size));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

std::string read_blob(std::istream& in) {
  uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  std::string blob(size, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("truncated checkpoint blob");
  return blob;
}

}  // namespace detail

namespace {

// torch's own optimizer serialization iterates a hash map keyed by tensor
// addresses, so its bytes are not reproducible across runs. Dump the Adam
// state manually in parameter order instead.
std::string optimizer_to_bytes(torch::optim::Optimizer& optimizer) {
  torch::serialize::OutputArchive archive;
  int64_t index = 0;
  for (const auto& group : optimizer.param_groups()) {
    for (const auto& param : group.params()) {
      const auto key = std::to_string(index++);
      auto it = optimizer.state().find(param.unsafeGetTensorImpl());
      const bool present = it != optimizer.state().end();
      archive.write(key + "/present", torch::tensor(static_cast<int64_t>(present)));
      if (!present) continue;
      auto& state = static_cast<torch::optim::AdamParamState&>(*it->second);
      archive.write(key + "/step", torch::tensor(state.step()));
      archive.write(key + "/exp_avg", state.exp_avg());
      archive.write(key + "/exp_avg_sq", state.exp_avg_sq());
      const bool has_max = state.max_exp_avg_sq().defined();
      archive.write(key + "/has_max", torch::tensor(static_cast<int64_t>(has_max)));
      if (has_max) archive.write(key + "/max_exp_avg_sq", state.max_exp_avg_sq());
    }
  }
  std::string bytes;
  archive.save_to([&bytes](const void* data, size_t size) {
    bytes.append(static_cast<const char*>(data), size);
    return size;
  });
  return bytes;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, AutoEncoder model, int64_t epoch,
                     torch::optim::Optimizer* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());

  nlohmann::json config{{"n_features", model->config().n_features},
                        {"resolution", model->config().resolution},
                        {"dropout_rate", model->config().dropout_rate},
                        {"epoch", epoch}};
  out << kCheckpointHeader << '\n' << config.dump() << '\n';
  detail::write_blob(out, detail::module_to_bytes(*model));
  detail::write_blob(out, optimizer ? optimizer_to_bytes(*optimizer) : std::string());
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());

  std::string header, config_line;
  std::getline(in, header);
  if (header != kCheckpointHeader) {
    throw std::runtime_error("bad checkpoint header in " + path.string() + ": " + header);
  }
  std::getline(in, config_line);
  auto config_json = nlohmann::json::parse(config_line);

  LoadedCheckpoint loaded;
  loaded.config.n_features = config_json.at("n_features").get<int64_t>();
  loaded.config.resolution = config_json.at("resolution").get<int64_t>();
  loaded.config.dropout_rate = config_json.at("dropout_rate").get<double>();
  loaded.epoch = config_json.at("epoch").get<int64_t>();

  loaded.model = AutoEncoder(loaded.config);
  detail::bytes_to_module(detail::read_blob(in), *loaded.model);
  loaded.optimizer_blob = detail::read_blob(in);
  return loaded;
}

void LoadedCheckpoint::restore_optimizer(torch::optim::Optimizer& optimizer) const {
  if (optimizer_blob.empty()) {
    throw std::runtime_error("checkpoint carries no optimizer state");
  }
  torch::serialize::InputArchive archive;
  archive.load_from(optimizer_blob.data(), optimizer_blob.size());
  int64_t index = 0;
  for (const auto& group : optimizer.param_groups()) {
    for (const auto& param : group.params()) {
      const auto key = std::to_string(index++);
      torch::Tensor present;
      archive.read(key + "/present", present);
      if (present.item<int64_t>() == 0) continue;
      auto state = std::make_unique<torch::optim::AdamParamState>();
      torch::Tensor step, exp_avg, exp_avg_sq, has_max;
      archive.read(key + "/step", step);
      archive.read(key + "/exp_avg", exp_avg);
      archive.read(key + "/exp_avg_sq", exp_avg_sq);
      archive.read(key + "/has_max", has_max);
      state->step(step.item<int64_t>());
      state->exp_avg(exp_avg);
      state->exp_avg_sq(exp_avg_sq);
      if (has_max.item<int64_t>() != 0) {
        torch::Tensor max_exp_avg_sq;
        archive.read(key + "/max_exp_avg_sq", max_exp_avg_sq);
        state->max_exp_avg_sq(max_exp_avg_sq);
      }
      optimizer.state()[param.unsafeGetTensorImpl()] = std::move(state);
    }
  }
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for digest: " + path.string());
  uint64_t h = 14695981039346656037ull;
  char buffer[1 << 16];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buffer[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

}  // namespace viewpose
