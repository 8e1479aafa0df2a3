// Python bindings over the library's main operations. Tensors cross the
// boundary as numpy float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "viewpose/checkpoint.hpp"
#include "viewpose/data.hpp"
#include "viewpose/downstream.hpp"
#include "viewpose/eval.hpp"
#include "viewpose/geometry.hpp"
#include "viewpose/losses.hpp"
#include "viewpose/rng.hpp"
#include "viewpose/trainer.hpp"

namespace py = pybind11;
using namespace viewpose;

namespace {

torch::Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& array) {
  std::vector<int64_t> shape(array.ndim());
  for (py::ssize_t i = 0; i < array.ndim(); ++i) shape[i] = array.shape(i);
  auto tensor = torch::empty(shape, torch::kDouble);
  std::memcpy(tensor.data_ptr<double>(), array.data(), sizeof(double) * array.size());
  return tensor;
}

py::array_t<double> to_array(const torch::Tensor& tensor) {
  auto contiguous = tensor.detach().to(torch::kDouble).contiguous();
  std::vector<py::ssize_t> shape(contiguous.sizes().begin(), contiguous.sizes().end());
  py::array_t<double> array(shape);
  std::memcpy(array.mutable_data(), contiguous.data_ptr<double>(),
              sizeof(double) * contiguous.numel());
  return array;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "view-invariant pose representation learning";

  m.def("euler_to_matrix",
        [](const py::array_t<double>& angles) { return to_array(euler_to_matrix(to_tensor(angles))); },
        py::arg("angles"), "Rotation matrix Rz@Ry@Rx from (z, y, x) Euler angles.");

  m.def("apply_viewpoint",
        [](const py::array_t<double>& pose, const py::array_t<double>& angles,
           const py::array_t<double>& translation) {
          return to_array(apply_viewpoint(to_tensor(pose), to_tensor(angles),
                                          to_tensor(translation)));
        },
        py::arg("pose"), py::arg("angles"), py::arg("translation"),
        "Rigid transform of a canonical pose; angles are (z, y, x) Euler angles.");

  m.def("pixel_shift_to_feature_shift",
        [](int dx, int dy, int width, int height) {
          return pixel_shift_to_feature_shift({dx, dy}, width, height);
        },
        py::arg("dx"), py::arg("dy"), py::arg("width"), py::arg("height"));

  m.def("accuracy", &accuracy, py::arg("predictions"), py::arg("labels"));
  m.def("spearman_rank_correlation", &spearman_rank_correlation, py::arg("predicted"),
        py::arg("truth"));

  m.def("render_figure",
        [](int motion, double amplitude, double phase, double limb_scale, double azimuth_deg,
           int resolution) {
          return to_array(render_figure(static_cast<MotionClass>(motion), amplitude, phase,
                                        limb_scale, azimuth_deg, resolution));
        },
        py::arg("motion"), py::arg("amplitude"), py::arg("phase"), py::arg("limb_scale"),
        py::arg("azimuth_deg"), py::arg("resolution"),
        "One synthetic frame as a (3, H, W) array in [-1, 1].");

  m.def("generate_manifest",
        [](const std::filesystem::path& directory, std::uint64_t seed,
           std::vector<double> azimuths, int resolution, int sequences, int frames,
           int subjects, bool graded_quality, int max_score) {
          SyntheticSceneSpec spec;
          spec.camera_azimuth_deg = std::move(azimuths);
          spec.resolution = resolution;
          spec.seed = seed;
          spec.n_subjects = subjects;
          spec.graded_quality = graded_quality;
          spec.max_score = max_score;
          auto dataset = generate_synthetic(spec, sequences, frames);
          write_manifest(dataset, directory);
          return dataset.sequences.size();
        },
        py::arg("directory"), py::arg("seed") = 0,
        py::arg("azimuths") = std::vector<double>{0.0, 90.0}, py::arg("resolution") = 64,
        py::arg("sequences") = 100, py::arg("frames") = 16, py::arg("subjects") = 5,
        py::arg("graded_quality") = false, py::arg("max_score") = 4,
        py::call_guard<py::gil_scoped_release>(),
        "Render a synthetic multi-view dataset and write its manifest.");

  m.def("encode_pose",
        [](const std::filesystem::path& checkpoint, const py::array_t<double>& image) {
          auto model = load_checkpoint(checkpoint).model;
          model->eval();
          torch::NoGradGuard no_grad;
          auto input = to_tensor(image).to(torch::kFloat);
          const bool batched = input.dim() == 4;
          auto pose = model->encode_pose(batched ? input : input.unsqueeze(0));
          return to_array(batched ? pose : pose.squeeze(0));
        },
        py::arg("checkpoint"), py::arg("image"),
        "Canonical 3xN pose features of a (3, H, W) image in [-1, 1].");

  m.def("cross_view_invariance",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest) {
          auto model = load_checkpoint(checkpoint).model;
          return cross_view_invariance(model, load_manifest(manifest));
        },
        py::arg("checkpoint"), py::arg("manifest"),
        py::call_guard<py::gil_scoped_release>());

  m.def("equivariance_residual",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
           std::uint64_t seed) {
          auto model = load_checkpoint(checkpoint).model;
          auto rng = make_rng(seed, "python-diagnostics");
          return equivariance_residual(model, load_manifest(manifest), rng);
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>());

  m.def("train_pretext",
        [](const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
           std::uint64_t seed, int64_t epochs, int64_t n_features, int64_t batch_size) {
          auto dataset = load_manifest(manifest);
          PretextConfig config;
          config.seed = seed;
          config.epochs = epochs;
          config.batch_size = batch_size;
          config.model.n_features = n_features;
          config.model.resolution = dataset.resolution;
          return train(dataset, config, out_dir).checkpoint;
        },
        py::arg("manifest"), py::arg("out_dir"), py::arg("seed") = 0, py::arg("epochs") = 20,
        py::arg("n_features") = 70, py::arg("batch_size") = 5,
        py::call_guard<py::gil_scoped_release>(),
        "Train the auto-encoder on a manifest; returns the checkpoint path.");

  m.attr("NUM_MOTION_CLASSES") = kNumMotionClasses;
  m.attr("CLIP_LENGTH") = kClipLength;
}
