// viewpose: generate synthetic data, train the disentangling auto-encoder,
// train downstream heads, evaluate, sweep the latent size, run diagnostics.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "viewpose/checkpoint.hpp"
#include "viewpose/data.hpp"
#include "viewpose/downstream.hpp"
#include "viewpose/eval.hpp"
#include "viewpose/model.hpp"
#include "viewpose/rng.hpp"
#include "viewpose/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace viewpose;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(in);
}

json section(const json& config, const char* name) {
  return config.contains(name) ? config.at(name) : json::object();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) {
      throw std::runtime_error("output directory exists and is not empty: " + out.string() +
                               " (pass --force to overwrite)");
    }
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

void write_resolved_config(const fs::path& out, const json& resolved) {
  std::ofstream file(out / "resolved-config.json");
  file << resolved.dump(2) << '\n';
}

std::vector<double> azimuths_for_views(int n_views) {
  if (n_views < 2) throw std::runtime_error("need at least 2 views");
  std::vector<double> azimuths;
  for (int i = 0; i < n_views; ++i) {
    azimuths.push_back(90.0 * i / (n_views - 1));
  }
  return azimuths;
}

LossToggles preset_toggles(const std::string& preset) {
  if (preset == "full") return {true, true};
  if (preset == "rec-only") return {false, false};
  if (preset == "rec-invar") return {true, false};
  if (preset == "rec-equiv") return {false, true};
  throw std::runtime_error("unknown loss preset: " + preset);
}

// Shared dataset-section plumbing so every command resolves data identically.
struct DataOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  int views = 2;
  int resolution = 64;
  int sequences = 100;
  int frames = 16;
  int subjects = 5;
  bool graded = false;
  int max_score = 4;

  void read(const json& config) {
    const auto data = section(config, "data");
    views = get_or(data, "views", views);
    resolution = get_or(data, "resolution", resolution);
    sequences = get_or(data, "sequences", sequences);
    frames = get_or(data, "frames", frames);
    subjects = get_or(data, "subjects", subjects);
    graded = get_or(data, "graded_quality", graded);
    max_score = get_or(data, "max_score", max_score);
  }

  json resolved() const {
    return {{"views", views},     {"resolution", resolution}, {"sequences", sequences},
            {"frames", frames},   {"subjects", subjects},     {"graded_quality", graded},
            {"max_score", max_score}};
  }

  MultiViewDataset generate() const {
    SyntheticSceneSpec spec;
    spec.camera_azimuth_deg = azimuths_for_views(views);
    spec.resolution = resolution;
    spec.seed = seed;
    spec.n_subjects = subjects;
    spec.graded_quality = graded;
    spec.max_score = max_score;
    return generate_synthetic(spec, sequences, frames);
  }
};

PretextConfig read_pretext_config(const json& config, std::uint64_t seed,
                                  const MultiViewDataset& dataset) {
  const auto pretext = section(config, "pretext");
  const auto model = section(config, "model");
  PretextConfig out;
  out.seed = seed;
  out.learning_rate = get_or(pretext, "learning_rate", out.learning_rate);
  out.batch_size = get_or(pretext, "batch_size", out.batch_size);
  out.epochs = get_or(pretext, "epochs", out.epochs);
  out.weights.alpha = get_or(pretext, "alpha", out.weights.alpha);
  out.weights.beta = get_or(pretext, "beta", out.weights.beta);
  out.weights.gamma = get_or(pretext, "gamma", out.weights.gamma);
  out.model.n_features = get_or(model, "n_features", out.model.n_features);
  out.model.dropout_rate = get_or(model, "dropout_rate", out.model.dropout_rate);
  out.model.resolution = dataset.resolution;
  return out;
}

json resolved_pretext(const PretextConfig& config, const std::string& preset) {
  return {{"learning_rate", config.learning_rate},
          {"batch_size", config.batch_size},
          {"epochs", config.epochs},
          {"alpha", config.weights.alpha},
          {"beta", config.weights.beta},
          {"gamma", config.weights.gamma},
          {"loss_preset", preset},
          {"n_features", config.model.n_features},
          {"resolution", config.model.resolution},
          {"dropout_rate", config.model.dropout_rate}};
}

std::vector<int> parse_view_list(const std::string& csv, int n_views) {
  std::vector<int> views;
  if (csv.empty()) {
    for (int v = 0; v < n_views; ++v) views.push_back(v);
    return views;
  }
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ',')) views.push_back(std::stoi(item));
  for (int v : views) {
    if (v < 0 || v >= n_views) throw std::runtime_error("view index out of range: " + item);
  }
  return views;
}

// CV: hold out whole camera views. CS: hold out whole subjects (the last
// ceil(20%) of the sorted subject ids).
struct Split {
  std::vector<SequenceSample> train, test;
};

Split split_dataset(const MultiViewDataset& dataset, const std::string& protocol,
                    const std::vector<int>& train_views) {
  Split split;
  if (protocol == "cv") {
    std::vector<int> test_views;
    for (int v = 0; v < dataset.views_per_scene; ++v) {
      if (std::find(train_views.begin(), train_views.end(), v) == train_views.end()) {
        test_views.push_back(v);
      }
    }
    if (test_views.empty()) throw std::runtime_error("cv protocol requires a held-out view");
    split.train = flatten_views(dataset, train_views);
    split.test = flatten_views(dataset, test_views);
    return split;
  }
  if (protocol == "cs") {
    std::set<std::string> subjects;
    for (const auto& seq : dataset.sequences) subjects.insert(seq.subject_id);
    const size_t held = std::max<size_t>(1, (subjects.size() + 4) / 5);
    std::set<std::string> held_out;
    for (auto it = subjects.rbegin(); it != subjects.rend() && held_out.size() < held; ++it) {
      held_out.insert(*it);
    }
    MultiViewDataset train_ds{{}, dataset.views_per_scene, dataset.resolution, dataset.modality};
    MultiViewDataset test_ds = train_ds;
    for (const auto& seq : dataset.sequences) {
      (held_out.count(seq.subject_id) ? test_ds : train_ds).sequences.push_back(seq);
    }
    if (train_ds.sequences.empty() || test_ds.sequences.empty()) {
      throw std::runtime_error("cs protocol split left an empty side");
    }
    split.train = flatten_views(train_ds, train_views);
    split.test = flatten_views(test_ds, train_views);
    return split;
  }
  throw std::runtime_error("unknown protocol: " + protocol);
}

EvalReport score_split(DownstreamModel& model, const std::vector<SequenceSample>& samples,
                       const std::string& protocol, bool quality_task, Rng& rng) {
  EvalReport report;
  report.protocol = protocol == "cv" ? "CV" : "CS";
  report.sample_count = static_cast<int64_t>(samples.size());
  if (quality_task) {
    std::vector<double> predicted, truth;
    for (const auto& sample : samples) {
      predicted.push_back(score_sequence(model, sample.frames));
      truth.push_back(static_cast<double>(sample.label));
    }
    report.metric = "spearman_rank_correlation";
    report.value = spearman_rank_correlation(predicted, truth);
    report.breakdown["average"] = report.value;
  } else {
    std::vector<int> predictions, labels;
    for (const auto& sample : samples) {
      auto indices = subsample_16(static_cast<int64_t>(sample.frames.size()), rng);
      std::vector<torch::Tensor> clip;
      for (int64_t idx : indices) clip.push_back(sample.frames[idx]);
      predictions.push_back(
          static_cast<int>(classify_sequence(model, clip).argmax().item<int64_t>()));
      labels.push_back(sample.label);
    }
    report.metric = "accuracy";
    report.value = accuracy(predictions, labels);
    // Per-class accuracy rows plus the overall average, Table-style.
    for (int c = 0; c < kNumMotionClasses; ++c) {
      std::vector<int> p, l;
      for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == c) {
          p.push_back(predictions[i]);
          l.push_back(labels[i]);
        }
      }
      if (!l.empty()) report.breakdown["class-" + std::to_string(c)] = accuracy(p, l);
    }
    report.breakdown["average"] = report.value;
  }
  return report;
}

int cmd_generate(const std::string& config_path, std::uint64_t seed, const std::string& out,
                 bool force, std::optional<int> views_override) {
  auto config = load_config_file(config_path);
  DataOptions data;
  data.read(config);
  data.seed = seed;
  if (views_override) data.views = *views_override;

  prepare_out_dir(out, force);
  auto dataset = data.generate();
  write_manifest(dataset, out);
  write_resolved_config(out, json{{"command", "generate"}, {"seed", seed},
                                  {"data", data.resolved()}});
  std::cout << "wrote " << dataset.sequences.size() << " sequences to " << out << "\n";
  return 0;
}

int cmd_train_pretext(const std::string& config_path, std::uint64_t seed,
                      const std::string& data_dir, const std::string& out, bool force,
                      std::optional<int64_t> epochs_override, const std::string& preset,
                      const std::string& resume) {
  auto config = load_config_file(config_path);
  auto dataset = load_manifest(data_dir);
  auto pretext = read_pretext_config(config, seed, dataset);
  if (epochs_override) pretext.epochs = *epochs_override;
  pretext.toggles = preset_toggles(preset);

  if (resume.empty()) prepare_out_dir(out, force);
  auto result = train(dataset, pretext, out,
                      resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
  write_resolved_config(out, json{{"command", "train-pretext"},
                                  {"seed", seed},
                                  {"data", data_dir},
                                  {"pretext", resolved_pretext(pretext, preset)}});
  std::cout << "checkpoint: " << result.checkpoint.string() << "\n"
            << "metrics: " << result.metrics.string() << "\n";
  return 0;
}

HeadConfig read_head_config(const json& config, std::uint64_t seed, const std::string& mode,
                            bool quality_task, int max_label,
                            std::optional<int64_t> epochs_override) {
  const auto downstream = section(config, "downstream");
  HeadConfig head;
  head.seed = seed;
  head.mode = parse_train_mode(mode);
  head.quality_task = quality_task;
  head.n_outputs = quality_task ? max_label + 1 : kNumMotionClasses;
  head.hidden_size = get_or(downstream, "hidden_size", head.hidden_size);
  head.learning_rate = get_or(downstream, "learning_rate", head.learning_rate);
  head.batch_size = get_or(downstream, "batch_size", head.batch_size);
  head.epochs = get_or(downstream, "epochs", head.epochs);
  if (epochs_override) head.epochs = *epochs_override;
  return head;
}

int cmd_train_downstream(const std::string& config_path, std::uint64_t seed,
                         const std::string& data_dir, const std::string& encoder,
                         const std::string& out, bool force, const std::string& mode,
                         const std::string& task, const std::string& protocol,
                         const std::string& train_views_csv,
                         std::optional<int64_t> epochs_override) {
  auto config = load_config_file(config_path);
  auto dataset = load_manifest(data_dir);
  const bool quality_task = task == "quality";
  if (!quality_task && task != "action") throw std::runtime_error("unknown task: " + task);

  int max_label = 0;
  for (const auto& seq : dataset.sequences) {
    if (seq.label) max_label = std::max(max_label, *seq.label);
  }
  auto head = read_head_config(config, seed, mode, quality_task, max_label, epochs_override);

  const auto train_views = parse_view_list(train_views_csv, dataset.views_per_scene);
  auto split = split_dataset(dataset, protocol, train_views);

  prepare_out_dir(out, force);
  ModelConfig model_config;
  model_config.resolution = dataset.resolution;
  model_config.n_features = get_or(section(config, "model"), "n_features",
                                   model_config.n_features);
  std::optional<fs::path> encoder_path =
      encoder.empty() ? std::nullopt : std::optional<fs::path>(encoder);

  auto result = train_downstream(
      split.train, encoder_path, model_config, head,
      [&](int64_t epoch, DownstreamModel& model) {
        auto rng = make_rng(seed, "val-epoch-" + std::to_string(epoch));
        auto report = score_split(model, split.test, protocol, quality_task, rng);
        report.write(fs::path(out) / ("eval-epoch-" + std::to_string(epoch + 1) + ".json"));
      });

  const auto head_path = fs::path(out) / "head.ckpt";
  save_head_checkpoint(head_path, result.model);
  write_resolved_config(out, json{{"command", "train-downstream"},
                                  {"seed", seed},
                                  {"data", data_dir},
                                  {"encoder", encoder},
                                  {"mode", mode},
                                  {"task", task},
                                  {"protocol", protocol},
                                  {"train_views", train_views},
                                  {"hidden_size", head.hidden_size},
                                  {"learning_rate", head.learning_rate},
                                  {"batch_size", head.batch_size},
                                  {"epochs", head.epochs}});
  std::cout << "head checkpoint: " << head_path.string() << "\n";
  for (size_t i = 0; i < result.epoch_train_loss.size(); ++i) {
    std::cout << "epoch " << i + 1 << " train loss " << result.epoch_train_loss[i]
              << " train accuracy " << result.epoch_train_accuracy[i] << "\n";
  }
  return 0;
}

void write_diagnostics(const fs::path& out, const std::string& pretext_ckpt,
                       const MultiViewDataset& dataset, std::uint64_t seed) {
  auto model = load_checkpoint(pretext_ckpt).model;

  EvalReport invariance;
  invariance.metric = "cross_view_invariance";
  invariance.value = cross_view_invariance(model, dataset);
  invariance.sample_count = static_cast<int64_t>(dataset.sequences.size());
  invariance.write(out / "diag-cross-view.json");

  auto rng = make_rng(seed, "diagnostics");
  EvalReport residual;
  residual.metric = "equivariance_residual";
  residual.value = equivariance_residual(model, dataset, rng);
  residual.sample_count = static_cast<int64_t>(dataset.sequences.size());
  residual.write(out / "diag-equivariance.json");

  std::cout << "cross_view_invariance " << invariance.value << "\n"
            << "equivariance_residual " << residual.value << "\n";
}

int cmd_eval(const std::string& config_path, std::uint64_t seed, const std::string& data_dir,
             const std::string& head_ckpt, const std::string& pretext_ckpt,
             const std::string& out, bool force, const std::string& protocol,
             const std::string& train_views_csv, bool diagnostics) {
  auto config = load_config_file(config_path);
  auto dataset = load_manifest(data_dir);
  prepare_out_dir(out, force);

  auto model = load_head_checkpoint(head_ckpt);
  const auto train_views = parse_view_list(train_views_csv, dataset.views_per_scene);
  auto split = split_dataset(dataset, protocol, train_views);

  auto rng = make_rng(seed, "eval");
  auto report = score_split(model, split.test, protocol, model.head_config.quality_task, rng);
  report.write(fs::path(out) / "report.json");
  std::cout << report.metric << " " << report.value << " over " << report.sample_count
            << " samples (" << report.protocol << ")\n";

  if (diagnostics) {
    if (pretext_ckpt.empty()) {
      throw std::runtime_error("--diagnostics requires --pretext <checkpoint>");
    }
    write_diagnostics(out, pretext_ckpt, dataset, seed);
  }
  write_resolved_config(out, json{{"command", "eval"},
                                  {"seed", seed},
                                  {"data", data_dir},
                                  {"head", head_ckpt},
                                  {"protocol", protocol},
                                  {"train_views", train_views},
                                  {"diagnostics", diagnostics}});
  return 0;
}

int cmd_sweep(const std::string& config_path, std::uint64_t seed, const std::string& data_dir,
              const std::string& out, bool force, std::vector<int64_t> sizes, int folds,
              std::optional<int64_t> epochs_override) {
  auto config = load_config_file(config_path);
  auto dataset = load_manifest(data_dir);
  auto pretext = read_pretext_config(config, seed, dataset);
  if (epochs_override) pretext.epochs = *epochs_override;

  prepare_out_dir(out, force);
  auto result = sweep_latent_size(dataset, sizes, folds, pretext, out);

  json table = json::array();
  for (size_t i = 0; i < result.sizes.size(); ++i) {
    table.push_back({{"n_features", result.sizes[i]}, {"mean_total", result.mean_total[i]}});
  }
  json report{{"metric", "validation_total_loss"}, {"rows", table},
              {"best_n_features", result.best_size}};
  std::ofstream file(fs::path(out) / "sweep.json");
  file << report.dump(2) << '\n';
  write_resolved_config(out, json{{"command", "sweep"},
                                  {"seed", seed},
                                  {"data", data_dir},
                                  {"sizes", sizes},
                                  {"folds", folds},
                                  {"pretext", resolved_pretext(pretext, "full")}});
  for (size_t i = 0; i < result.sizes.size(); ++i) {
    std::cout << "N=" << result.sizes[i] << " mean validation total " << result.mean_total[i]
              << "\n";
  }
  std::cout << "best N=" << result.best_size << "\n";
  return 0;
}

int cmd_diagnose(const std::string& config_path, std::uint64_t seed,
                 const std::string& data_dir, const std::string& pretext_ckpt,
                 const std::string& out, bool force) {
  load_config_file(config_path);  // validated for parse errors only
  auto dataset = load_manifest(data_dir);
  prepare_out_dir(out, force);
  write_diagnostics(out, pretext_ckpt, dataset, seed);
  write_resolved_config(out, json{{"command", "diagnose"},
                                  {"seed", seed},
                                  {"data", data_dir},
                                  {"pretext", pretext_ckpt}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"view-invariant pose representation learning"};
  app.require_subcommand(1);

  std::string config_path, out, data_dir, encoder, head_ckpt, pretext_ckpt, resume;
  std::string preset = "full", mode = "frozen", task = "action", protocol = "cv";
  std::string train_views_csv;
  std::uint64_t seed = 0;
  bool force = false, diagnostics = false;
  std::optional<int> views_override;
  std::optional<int64_t> epochs_override;
  std::vector<int64_t> sizes = {40, 70, 100, 130, 160, 190};
  int folds = 2;

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", config_path, "JSON config file")
        ->envname("VIEWPOSE_CONFIG");
    cmd->add_option("--seed", seed, "root RNG seed")->envname("VIEWPOSE_SEED");
    if (needs_out) {
      cmd->add_option("--out", out, "output directory")->required()->envname("VIEWPOSE_OUT");
      cmd->add_flag("--force", force, "overwrite a non-empty output directory");
    }
  };

  auto* generate = app.add_subcommand("generate", "render a synthetic multi-view dataset");
  add_common(generate, true);
  generate->add_option("--views", views_override, "number of camera views");

  auto* train_pretext = app.add_subcommand("train-pretext", "train the auto-encoder");
  add_common(train_pretext, true);
  train_pretext->add_option("--data", data_dir, "dataset directory")->required();
  train_pretext->add_option("--epochs", epochs_override, "override epoch count");
  train_pretext->add_option("--loss-preset", preset,
                            "full | rec-only | rec-invar | rec-equiv");
  train_pretext->add_option("--resume", resume, "checkpoint to resume from");

  auto* train_down = app.add_subcommand("train-downstream", "train a sequence head");
  add_common(train_down, true);
  train_down->add_option("--data", data_dir, "dataset directory")->required();
  train_down->add_option("--encoder", encoder, "pretext checkpoint (frozen / fine-tune)");
  train_down->add_option("--mode", mode, "frozen | fine-tune | scratch");
  train_down->add_option("--task", task, "action | quality");
  train_down->add_option("--protocol", protocol, "cv | cs");
  train_down->add_option("--train-views", train_views_csv, "comma-separated view indices");
  train_down->add_option("--epochs", epochs_override, "override epoch count");

  auto* eval = app.add_subcommand("eval", "evaluate a trained head");
  add_common(eval, true);
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--head", head_ckpt, "head checkpoint")->required();
  eval->add_option("--pretext", pretext_ckpt, "pretext checkpoint for --diagnostics");
  eval->add_option("--protocol", protocol, "cv | cs");
  eval->add_option("--train-views", train_views_csv, "comma-separated view indices");
  eval->add_flag("--diagnostics", diagnostics,
                 "also report cross-view invariance and equivariance residual");

  auto* sweep = app.add_subcommand("sweep", "sweep the canonical pose latent size");
  add_common(sweep, true);
  sweep->add_option("--data", data_dir, "dataset directory")->required();
  sweep->add_option("--sizes", sizes, "latent sizes to try")->delimiter(',');
  sweep->add_option("--folds", folds, "cross-validation folds");
  sweep->add_option("--epochs", epochs_override, "override epoch count");

  auto* diagnose = app.add_subcommand("diagnose", "invariance diagnostics for a checkpoint");
  add_common(diagnose, true);
  diagnose->add_option("--data", data_dir, "dataset directory")->required();
  diagnose->add_option("--pretext", pretext_ckpt, "pretext checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(config_path, seed, out, force, views_override);
    if (*train_pretext) {
      return cmd_train_pretext(config_path, seed, data_dir, out, force, epochs_override,
                               preset, resume);
    }
    if (*train_down) {
      return cmd_train_downstream(config_path, seed, data_dir, encoder, out, force, mode,
                                  task, protocol, train_views_csv, epochs_override);
    }
    if (*eval) {
      return cmd_eval(config_path, seed, data_dir, head_ckpt, pretext_ckpt, out, force,
                      protocol, train_views_csv, diagnostics);
    }
    if (*sweep) {
      return cmd_sweep(config_path, seed, data_dir, out, force, sizes, folds,
                       epochs_override);
    }
    if (*diagnose) {
      return cmd_diagnose(config_path, seed, data_dir, pretext_ckpt, out, force);
    }
  } catch (const std::exception& error) {
    std::cerr << json{{"error", error.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
