#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "viewpose/geometry.hpp"
#include "viewpose/rng.hpp"

namespace viewpose {

inline constexpr const char* kManifestVersion = "viewpose-manifest-v1";
inline constexpr double kBackgroundValue = -1.0;

// One camera's ordered frames of a scene. Frames are 3xHxW float tensors with
// values in [-1, 1], quantized to 8-bit levels so manifests round-trip losslessly.
struct ViewTrack {
  double azimuth_deg = 0.0;
  std::vector<torch::Tensor> frames;
};

struct Sequence {
  std::string scene_id;
  std::string subject_id;
  std::optional<int> label;  // action class or quality score
  std::vector<ViewTrack> views;

  int64_t frame_count() const { return static_cast<int64_t>(views.at(0).frames.size()); }
};

struct MultiViewDataset {
  std::vector<Sequence> sequences;
  int views_per_scene = 2;
  int resolution = 128;
  std::string modality = "synthetic";  // "rgb-map" | "depth-mask" | "synthetic"

  void validate() const;  // simultaneity (equal frame counts) and resolution
};

// The six images of one training step plus their augmentation parameters.
struct TrainingTuple {
  torch::Tensor image_v, image_w;          // simultaneous frames at k
  torch::Tensor rotation_source_v;         // frame m of view v
  torch::Tensor rotation_source_w;         // frame n of view w
  torch::Tensor augmented_v, augmented_w;  // frame k shifted by c1 / c2
  ShiftVector c1, c2;
  bool flip_applied = false;
};

enum class MotionClass { kWave = 0, kSquat = 1, kWalk = 2, kLean = 3 };
inline constexpr int kNumMotionClasses = 4;

struct SyntheticSceneSpec {
  std::vector<double> camera_azimuth_deg = {0.0, 90.0};
  int resolution = 64;
  std::uint64_t seed = 0;
  int n_subjects = 5;
  // When true, every sequence performs the same motion with an amplitude graded
  // 0..max_score; labels become the grade instead of the motion class.
  bool graded_quality = false;
  int max_score = 4;

  void validate() const;
};

// --- synthetic scene ground truth (exposed for oracle-style tests) ---

// 3D joint positions of the stick figure at a phase in [0, 1) of its motion
// cycle. Coordinates are in the normalized world frame ([-1, 1] spans the
// image; y points down, matching image rows).
std::vector<std::array<double, 3>> figure_joints(MotionClass motion, double amplitude,
                                                 double phase, double limb_scale);

// Orthographic projection used by the renderer: world -> camera via a rotation
// about the vertical axis by -azimuth, then drop z.
std::array<double, 3> camera_coords(const std::array<double, 3>& point, double azimuth_deg);

// Renders one frame; offset is a world-space translation of the whole figure.
torch::Tensor render_figure(MotionClass motion, double amplitude, double phase,
                            double limb_scale, double azimuth_deg, int resolution,
                            std::array<double, 2> offset = {0.0, 0.0});

MultiViewDataset generate_synthetic(const SyntheticSceneSpec& spec, int n_sequences,
                                    int frames_per_sequence);

// --- manifest IO ---

void write_manifest(const MultiViewDataset& dataset, const std::filesystem::path& directory);
MultiViewDataset load_manifest(const std::filesystem::path& path);  // file or directory

// --- augmentations and sampling ---

torch::Tensor shift_image(const torch::Tensor& image, const ShiftVector& shift,
                          double fill = kBackgroundValue);
torch::Tensor flip_image(const torch::Tensor& image);

TrainingTuple make_training_tuple(const Sequence& sequence, int view_v, int view_w, int64_t k,
                                  Rng& rng);

// One random frame per contiguous segment, order preserved. Sequences shorter
// than 16 frames share frames between segments.
std::vector<int64_t> subsample_16(int64_t length, Rng& rng);

// Starts of the floor(length/16) non-overlapping 16-frame clips.
std::vector<int64_t> clip_split_16(int64_t length);

inline constexpr int64_t kClipLength = 16;

}  // namespace viewpose
