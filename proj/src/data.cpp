#include "viewpose/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

namespace viewpose {

namespace fs = std::filesystem;

void MultiViewDataset::validate() const {
  for (const auto& seq : sequences) {
    if (seq.views.size() < 2) {
      throw std::runtime_error("sequence " + seq.scene_id + " has fewer than 2 views");
    }
    const auto frames = seq.views.front().frames.size();
    for (const auto& view : seq.views) {
      if (view.frames.size() != frames) {
        throw std::runtime_error("sequence " + seq.scene_id +
                                 " has views of unequal length");
      }
      for (const auto& frame : view.frames) {
        if (frame.dim() != 3 || frame.size(0) != 3 || frame.size(1) != resolution ||
            frame.size(2) != resolution) {
          throw std::runtime_error("sequence " + seq.scene_id +
                                   " has a frame that does not match resolution " +
                                   std::to_string(resolution));
        }
      }
    }
  }
}

void SyntheticSceneSpec::validate() const {
  if (camera_azimuth_deg.size() < 2) {
    throw std::invalid_argument("at least 2 camera azimuths required");
  }
  if (resolution <= 0 || resolution % 8 != 0) {
    throw std::invalid_argument("resolution must be positive and divisible by 8");
  }
  if (n_subjects <= 0) throw std::invalid_argument("n_subjects must be positive");
  if (max_score < 1) throw std::invalid_argument("max_score must be >= 1");
}

// ---------------------------------------------------------------------------
// Stick figure
// ---------------------------------------------------------------------------

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFigureScale = 0.72;  // leaves room for W/4 positional shifts

enum Joint {
  kPelvis = 0,
  kSpine,
  kNeck,
  kHead,
  kShoulderR,
  kElbowR,
  kHandR,
  kShoulderL,
  kElbowL,
  kHandL,
  kHipR,
  kKneeR,
  kFootR,
  kHipL,
  kKneeL,
  kFootL,
  kNumJoints
};

struct Bone {
  int a, b;
  int group;  // 0 torso, 1 right arm, 2 left arm, 3 right leg, 4 left leg
};

constexpr Bone kBones[] = {
    {kPelvis, kSpine, 0},    {kSpine, kNeck, 0},    {kNeck, kHead, 0},
    {kNeck, kShoulderR, 0},  {kNeck, kShoulderL, 0}, {kPelvis, kHipR, 0},
    {kPelvis, kHipL, 0},     {kShoulderR, kElbowR, 1}, {kElbowR, kHandR, 1},
    {kShoulderL, kElbowL, 2}, {kElbowL, kHandL, 2},  {kHipR, kKneeR, 3},
    {kKneeR, kFootR, 3},     {kHipL, kKneeL, 4},    {kKneeL, kFootL, 4},
};

constexpr double kGroupColor[6][3] = {
    {0.85, 0.75, 0.35},  // torso
    {0.90, 0.25, 0.25},  // right arm
    {0.25, 0.85, 0.30},  // left arm
    {0.30, 0.45, 0.90},  // right leg
    {0.85, 0.35, 0.85},  // left leg
    {0.92, 0.90, 0.85},  // head
};

std::vector<std::array<double, 3>> rest_pose() {
  std::vector<std::array<double, 3>> j(kNumJoints);
  j[kPelvis] = {0.00, 0.10, 0.00};
  j[kSpine] = {0.00, -0.15, 0.00};
  j[kNeck] = {0.00, -0.40, 0.00};
  j[kHead] = {0.00, -0.56, 0.00};
  j[kShoulderR] = {0.18, -0.38, -0.04};
  j[kElbowR] = {0.29, -0.14, -0.08};
  j[kHandR] = {0.33, 0.07, -0.10};
  j[kShoulderL] = {-0.18, -0.38, -0.04};
  j[kElbowL] = {-0.29, -0.14, -0.08};
  j[kHandL] = {-0.33, 0.07, -0.10};
  j[kHipR] = {0.10, 0.13, 0.00};
  j[kKneeR] = {0.12, 0.45, 0.03};
  j[kFootR] = {0.13, 0.78, 0.00};
  j[kHipL] = {-0.10, 0.13, 0.00};
  j[kKneeL] = {-0.12, 0.45, 0.03};
  j[kFootL] = {-0.13, 0.78, 0.00};
  return j;
}

}  // namespace

std::vector<std::array<double, 3>> figure_joints(MotionClass motion, double amplitude,
                                                 double phase, double limb_scale) {
  auto j = rest_pose();
  const double s = std::sin(2.0 * kPi * phase);
  const double c = std::cos(2.0 * kPi * phase);
  const double bend = 0.5 - 0.5 * c;  // 0..1, smooth

  switch (motion) {
    case MotionClass::kWave: {
      // Right arm raised, forearm sweeping; slight depth motion of the hand.
      j[kElbowR] = {0.30, -0.52, -0.06};
      const double angle = 0.9 + amplitude * 1.1 * s;
      j[kHandR] = {j[kElbowR][0] + 0.24 * std::sin(angle),
                   j[kElbowR][1] - 0.24 * std::cos(angle), -0.06 - 0.10 * amplitude * c};
      break;
    }
    case MotionClass::kSquat: {
      const double drop = amplitude * 0.26 * bend;
      for (int idx : {kPelvis, kSpine, kNeck, kHead, kShoulderR, kShoulderL, kElbowR, kElbowL,
                      kHandR, kHandL, kHipR, kHipL}) {
        j[idx][1] += drop;
      }
      for (int idx : {kKneeR, kKneeL}) {
        j[idx][1] += drop * 0.45;
        j[idx][2] -= amplitude * 0.28 * bend;  // knees come toward the camera
      }
      break;
    }
    case MotionClass::kWalk: {
      // Opposite-phase leg swings in depth, arms counter-swinging.
      const double swing = amplitude * 0.55 * s;
      j[kKneeR][2] += 0.30 * swing;
      j[kFootR][2] += 0.60 * swing;
      j[kFootR][1] -= 0.10 * std::abs(swing);
      j[kKneeL][2] -= 0.30 * swing;
      j[kFootL][2] -= 0.60 * swing;
      j[kFootL][1] -= 0.10 * std::abs(swing);
      j[kHandR][2] -= 0.35 * swing;
      j[kHandL][2] += 0.35 * swing;
      break;
    }
    case MotionClass::kLean: {
      // Sideways lean combined with a forward bow, hinged at the pelvis.
      const double lean = amplitude * 0.55 * s;
      const double bow = amplitude * 0.35 * bend;
      const auto pivot = j[kPelvis];
      for (int idx : {kSpine, kNeck, kHead, kShoulderR, kShoulderL, kElbowR, kElbowL, kHandR,
                      kHandL}) {
        const double x = j[idx][0] - pivot[0];
        const double y = j[idx][1] - pivot[1];
        j[idx][0] = pivot[0] + x * std::cos(lean) - y * std::sin(lean);
        j[idx][1] = pivot[1] + x * std::sin(lean) + y * std::cos(lean);
        j[idx][2] += bow * (pivot[1] - j[idx][1]);
      }
      break;
    }
  }

  for (auto& p : j) {
    for (auto& v : p) v *= kFigureScale * limb_scale;
  }
  return j;
}

std::array<double, 3> camera_coords(const std::array<double, 3>& point, double azimuth_deg) {
  const double a = -azimuth_deg * kPi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  // Rotation about the vertical (y) axis; orthographic camera looks along +z.
  return {ca * point[0] + sa * point[2], point[1], -sa * point[0] + ca * point[2]};
}

torch::Tensor render_figure(MotionClass motion, double amplitude, double phase,
                            double limb_scale, double azimuth_deg, int resolution,
                            std::array<double, 2> offset) {
  const auto joints = figure_joints(motion, amplitude, phase, limb_scale);

  struct Prim {
    std::array<double, 3> p0, p1;
    double radius;
    const double* color;
    double depth;  // painter's order key
  };
  std::vector<Prim> prims;
  prims.reserve(std::size(kBones) + 1);
  for (const auto& bone : kBones) {
    auto p0 = camera_coords(joints[bone.a], azimuth_deg);
    auto p1 = camera_coords(joints[bone.b], azimuth_deg);
    p0[0] += offset[0]; p0[1] += offset[1];
    p1[0] += offset[0]; p1[1] += offset[1];
    prims.push_back({p0, p1, 0.040, kGroupColor[bone.group], 0.5 * (p0[2] + p1[2])});
  }
  auto head = camera_coords(joints[kHead], azimuth_deg);
  head[0] += offset[0]; head[1] += offset[1];
  prims.push_back({head, head, 0.085, kGroupColor[5], head[2]});

  // Far primitives first; near ones paint over them.
  std::stable_sort(prims.begin(), prims.end(),
                   [](const Prim& a, const Prim& b) { return a.depth > b.depth; });

  const int res = resolution;
  const double edge = 2.0 / res;  // ~1 pixel of anti-aliasing falloff
  std::vector<float> rgb(static_cast<size_t>(3) * res * res);

  for (int row = 0; row < res; ++row) {
    const double y = 2.0 * (row + 0.5) / res - 1.0;
    for (int col = 0; col < res; ++col) {
      const double x = 2.0 * (col + 0.5) / res - 1.0;
      double val[3] = {0.0, 0.0, 0.0};
      for (const auto& prim : prims) {
        const double vx = prim.p1[0] - prim.p0[0];
        const double vy = prim.p1[1] - prim.p0[1];
        const double len2 = vx * vx + vy * vy;
        double t = 0.0;
        if (len2 > 0.0) {
          t = std::clamp(((x - prim.p0[0]) * vx + (y - prim.p0[1]) * vy) / len2, 0.0, 1.0);
        }
        const double dx = x - (prim.p0[0] + t * vx);
        const double dy = y - (prim.p0[1] + t * vy);
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double coverage = std::clamp((prim.radius - dist) / edge + 0.5, 0.0, 1.0);
        if (coverage <= 0.0) continue;
        const double z = prim.p0[2] + t * (prim.p1[2] - prim.p0[2]);
        const double shade = std::clamp(0.78 - 0.55 * z, 0.25, 1.0);
        for (int ch = 0; ch < 3; ++ch) {
          val[ch] += coverage * (prim.color[ch] * shade - val[ch]);
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        // Quantize to the 8-bit grid so manifests round-trip losslessly.
        const int u8 = static_cast<int>(std::lround(std::clamp(val[ch], 0.0, 1.0) * 255.0));
        rgb[(static_cast<size_t>(ch) * res + row) * res + col] =
            static_cast<float>(u8 / 255.0 * 2.0 - 1.0);
      }
    }
  }

  return torch::from_blob(rgb.data(), {3, res, res}, torch::kFloat32).clone();
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

MultiViewDataset generate_synthetic(const SyntheticSceneSpec& spec, int n_sequences,
                                    int frames_per_sequence) {
  spec.validate();
  if (n_sequences <= 0 || frames_per_sequence <= 0) {
    throw std::invalid_argument("sequence and frame counts must be positive");
  }

  MultiViewDataset dataset;
  dataset.views_per_scene = static_cast<int>(spec.camera_azimuth_deg.size());
  dataset.resolution = spec.resolution;
  dataset.modality = "synthetic";

  auto subject_rng = make_rng(spec.seed, "subjects");
  std::vector<double> limb_scale(spec.n_subjects);
  std::uniform_real_distribution<double> scale_dist(0.88, 1.12);
  for (auto& s : limb_scale) s = scale_dist(subject_rng);

  auto rng = make_rng(spec.seed, "scenes");
  std::uniform_real_distribution<double> phase_dist(0.0, 1.0);
  std::uniform_real_distribution<double> amp_dist(0.6, 1.0);
  std::uniform_real_distribution<double> jitter_dist(-0.04, 0.04);
  std::uniform_int_distribution<int> cycles_dist(1, 2);

  for (int i = 0; i < n_sequences; ++i) {
    // Graded labels cycle with period max_score+1; advance the subject per
    // label block so a subject never collapses onto a single score level.
    const int subject = spec.graded_quality
                            ? (i / (spec.max_score + 1)) % spec.n_subjects
                            : i % spec.n_subjects;
    MotionClass motion;
    double amplitude;
    int label;
    if (spec.graded_quality) {
      motion = MotionClass::kWalk;
      label = i % (spec.max_score + 1);
      amplitude = 0.15 + 0.85 * label / spec.max_score + jitter_dist(rng);
    } else {
      label = i % kNumMotionClasses;
      motion = static_cast<MotionClass>(label);
      amplitude = amp_dist(rng);
    }
    const double phase0 = phase_dist(rng);
    const int cycles = cycles_dist(rng);

    Sequence seq;
    seq.scene_id = "scene" + std::to_string(i);
    seq.subject_id = "subject" + std::to_string(subject);
    seq.label = label;
    for (double azimuth : spec.camera_azimuth_deg) {
      ViewTrack track;
      track.azimuth_deg = azimuth;
      track.frames.reserve(frames_per_sequence);
      for (int f = 0; f < frames_per_sequence; ++f) {
        const double phase =
            std::fmod(phase0 + static_cast<double>(cycles) * f / frames_per_sequence, 1.0);
        track.frames.push_back(render_figure(motion, amplitude, phase, limb_scale[subject],
                                             azimuth, spec.resolution));
      }
      seq.views.push_back(std::move(track));
    }
    dataset.sequences.push_back(std::move(seq));
  }

  dataset.validate();
  return dataset;
}

// ---------------------------------------------------------------------------
// Manifest IO
// ---------------------------------------------------------------------------

namespace {

cv::Mat tensor_to_mat(const torch::Tensor& image) {
  auto chw = image.to(torch::kFloat32).contiguous();
  const int h = static_cast<int>(chw.size(1));
  const int w = static_cast<int>(chw.size(2));
  cv::Mat mat(h, w, CV_8UC3);
  auto acc = chw.accessor<float, 3>();
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      auto& px = mat.at<cv::Vec3b>(row, col);
      for (int ch = 0; ch < 3; ++ch) {
        const double v01 = (acc[ch][row][col] + 1.0) / 2.0;
        px[2 - ch] = static_cast<uchar>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
      }
    }
  }
  return mat;
}

torch::Tensor mat_to_tensor(const cv::Mat& mat) {
  auto out = torch::empty({3, mat.rows, mat.cols}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int row = 0; row < mat.rows; ++row) {
    for (int col = 0; col < mat.cols; ++col) {
      const auto& px = mat.at<cv::Vec3b>(row, col);
      for (int ch = 0; ch < 3; ++ch) {
        acc[ch][row][col] = static_cast<float>(px[2 - ch] / 255.0 * 2.0 - 1.0);
      }
    }
  }
  return out;
}

}  // namespace

void write_manifest(const MultiViewDataset& dataset, const fs::path& directory) {
  dataset.validate();
  fs::create_directories(directory);

  nlohmann::json manifest;
  manifest["version"] = kManifestVersion;
  manifest["resolution"] = dataset.resolution;
  manifest["modality"] = dataset.modality;
  manifest["views_per_scene"] = dataset.views_per_scene;

  nlohmann::json sequences = nlohmann::json::array();
  for (const auto& seq : dataset.sequences) {
    nlohmann::json entry;
    entry["scene_id"] = seq.scene_id;
    entry["subject_id"] = seq.subject_id;
    if (seq.label) entry["label"] = *seq.label;
    nlohmann::json views = nlohmann::json::array();
    for (size_t v = 0; v < seq.views.size(); ++v) {
      nlohmann::json view;
      view["azimuth_deg"] = seq.views[v].azimuth_deg;
      nlohmann::json paths = nlohmann::json::array();
      for (size_t f = 0; f < seq.views[v].frames.size(); ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "images/%s/view%zu/f%05zu.png",
                      seq.scene_id.c_str(), v, f);
        fs::path file = directory / name;
        fs::create_directories(file.parent_path());
        if (!cv::imwrite(file.string(), tensor_to_mat(seq.views[v].frames[f]))) {
          throw std::runtime_error("failed to write " + file.string());
        }
        paths.push_back(name);
      }
      view["frames"] = std::move(paths);
      views.push_back(std::move(view));
    }
    entry["views"] = std::move(views);
    sequences.push_back(std::move(entry));
  }
  manifest["sequences"] = std::move(sequences);

  std::ofstream out(directory / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed to write manifest.json");
}

MultiViewDataset load_manifest(const fs::path& path) {
  fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.at("version").get<std::string>() != kManifestVersion) {
    throw std::runtime_error("unsupported manifest version in " + manifest_path.string());
  }

  const fs::path base = manifest_path.parent_path();
  MultiViewDataset dataset;
  dataset.resolution = manifest.at("resolution").get<int>();
  dataset.modality = manifest.at("modality").get<std::string>();
  dataset.views_per_scene = manifest.at("views_per_scene").get<int>();

  for (const auto& entry : manifest.at("sequences")) {
    Sequence seq;
    seq.scene_id = entry.at("scene_id").get<std::string>();
    seq.subject_id = entry.at("subject_id").get<std::string>();
    if (entry.contains("label")) seq.label = entry.at("label").get<int>();
    std::optional<size_t> frame_count;
    for (const auto& view : entry.at("views")) {
      ViewTrack track;
      track.azimuth_deg = view.at("azimuth_deg").get<double>();
      for (const auto& rel : view.at("frames")) {
        fs::path file = base / rel.get<std::string>();
        cv::Mat mat = cv::imread(file.string(), cv::IMREAD_COLOR);
        if (mat.empty()) {
          throw std::runtime_error("sequence " + seq.scene_id + ": missing or unreadable frame " +
                                   file.string());
        }
        if (mat.rows != dataset.resolution || mat.cols != dataset.resolution) {
          throw std::runtime_error("sequence " + seq.scene_id + ": frame " + file.string() +
                                   " does not match resolution " +
                                   std::to_string(dataset.resolution));
        }
        track.frames.push_back(mat_to_tensor(mat));
      }
      if (frame_count && track.frames.size() != *frame_count) {
        throw std::runtime_error("sequence " + seq.scene_id + ": views of unequal length");
      }
      frame_count = track.frames.size();
      seq.views.push_back(std::move(track));
    }
    dataset.sequences.push_back(std::move(seq));
  }

  dataset.validate();
  return dataset;
}

// ---------------------------------------------------------------------------
// Augmentations and sampling
// ---------------------------------------------------------------------------

torch::Tensor shift_image(const torch::Tensor& image, const ShiftVector& shift, double fill) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw std::invalid_argument("shift_image expects a 3xHxW image");
  }
  const int64_t h = image.size(1), w = image.size(2);
  auto out = torch::full_like(image, fill);
  const int64_t dx = shift.dx_pixels, dy = shift.dy_pixels;
  const int64_t src_x0 = std::max<int64_t>(0, -dx), src_x1 = std::min<int64_t>(w, w - dx);
  const int64_t src_y0 = std::max<int64_t>(0, -dy), src_y1 = std::min<int64_t>(h, h - dy);
  if (src_x0 < src_x1 && src_y0 < src_y1) {
    out.slice(1, src_y0 + dy, src_y1 + dy).slice(2, src_x0 + dx, src_x1 + dx) =
        image.slice(1, src_y0, src_y1).slice(2, src_x0, src_x1);
  }
  return out;
}

torch::Tensor flip_image(const torch::Tensor& image) { return image.flip(-1); }

TrainingTuple make_training_tuple(const Sequence& sequence, int view_v, int view_w, int64_t k,
                                  Rng& rng) {
  const int64_t frames = sequence.frame_count();
  if (k < 0 || k >= frames) throw std::invalid_argument("frame index out of range");
  const auto& frames_v = sequence.views.at(view_v).frames;
  const auto& frames_w = sequence.views.at(view_w).frames;
  const int64_t width = frames_v.at(0).size(2);
  const int64_t height = frames_v.at(0).size(1);

  std::uniform_int_distribution<int64_t> frame_dist(0, frames - 1);
  std::uniform_int_distribution<int> shift_x(-static_cast<int>(width / 4),
                                             static_cast<int>(width / 4));
  std::uniform_int_distribution<int> shift_y(-static_cast<int>(height / 4),
                                             static_cast<int>(height / 4));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TrainingTuple tuple;
  const int64_t m = frame_dist(rng);
  const int64_t n = frame_dist(rng);
  tuple.c1 = {shift_x(rng), shift_y(rng)};
  tuple.c2 = {shift_x(rng), shift_y(rng)};
  tuple.flip_applied = unit(rng) < 0.5;

  auto maybe_flip = [&tuple](const torch::Tensor& image) {
    return tuple.flip_applied ? flip_image(image) : image;
  };
  tuple.image_v = maybe_flip(frames_v[k]);
  tuple.image_w = maybe_flip(frames_w[k]);
  tuple.rotation_source_v = maybe_flip(frames_v[m]);
  tuple.rotation_source_w = maybe_flip(frames_w[n]);
  tuple.augmented_v = shift_image(tuple.image_v, tuple.c1);
  tuple.augmented_w = shift_image(tuple.image_w, tuple.c2);
  return tuple;
}

std::vector<int64_t> subsample_16(int64_t length, Rng& rng) {
  if (length <= 0) throw std::invalid_argument("cannot subsample an empty sequence");
  std::vector<int64_t> indices;
  indices.reserve(kClipLength);
  for (int64_t seg = 0; seg < kClipLength; ++seg) {
    // Rounded-linspace boundaries; short sequences share frames across segments.
    int64_t lo = seg * length / kClipLength;
    int64_t hi = std::max((seg + 1) * length / kClipLength, lo + 1);
    hi = std::min(hi, length);
    lo = std::min(lo, length - 1);
    std::uniform_int_distribution<int64_t> pick(lo, hi - 1);
    indices.push_back(pick(rng));
  }
  return indices;
}

std::vector<int64_t> clip_split_16(int64_t length) {
  if (length < kClipLength) {
    throw std::invalid_argument("sequence shorter than 16 frames cannot be split into clips");
  }
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + kClipLength <= length; s += kClipLength) starts.push_back(s);
  return starts;
}

}  // namespace viewpose
