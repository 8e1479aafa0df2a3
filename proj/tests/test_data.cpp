#include "testing.hpp"

#include <filesystem>
#include <fstream>

#include "viewpose/data.hpp"

using namespace viewpose;

namespace {

SyntheticSceneSpec small_spec() {
  SyntheticSceneSpec spec;
  spec.camera_azimuth_deg = {0.0, 90.0};
  spec.resolution = 32;
  spec.seed = 7;
  return spec;
}

bool datasets_equal(const MultiViewDataset& a, const MultiViewDataset& b) {
  if (a.sequences.size() != b.sequences.size()) return false;
  for (size_t s = 0; s < a.sequences.size(); ++s) {
    const auto& sa = a.sequences[s];
    const auto& sb = b.sequences[s];
    if (sa.scene_id != sb.scene_id || sa.subject_id != sb.subject_id || sa.label != sb.label) {
      return false;
    }
    if (sa.views.size() != sb.views.size()) return false;
    for (size_t v = 0; v < sa.views.size(); ++v) {
      if (sa.views[v].frames.size() != sb.views[v].frames.size()) return false;
      for (size_t f = 0; f < sa.views[v].frames.size(); ++f) {
        if (!torch::equal(sa.views[v].frames[f], sb.views[v].frames[f])) return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic per seed") {
  auto a = generate_synthetic(small_spec(), 4, 6);
  auto b = generate_synthetic(small_spec(), 4, 6);
  CHECK(datasets_equal(a, b));

  auto spec2 = small_spec();
  spec2.seed = 8;
  CHECK_FALSE(datasets_equal(a, generate_synthetic(spec2, 4, 6)));
}

TEST_CASE("synthetic generation shape contract") {
  auto dataset = generate_synthetic(small_spec(), 10, 16);
  CHECK(dataset.sequences.size() == 10);
  for (const auto& seq : dataset.sequences) {
    CHECK(seq.views.size() == 2);
    CHECK(seq.frame_count() == 16);
    CHECK(seq.views[0].frames[0].sizes() == torch::IntArrayRef({3, 32, 32}));
    CHECK(seq.label.has_value());
  }

  SyntheticSceneSpec bad = small_spec();
  bad.camera_azimuth_deg = {0.0};
  CHECK_THROWS_AS(generate_synthetic(bad, 2, 4), std::invalid_argument);
}

TEST_CASE("orthogonal cameras swap x and z in projection") {
  auto joints = figure_joints(MotionClass::kWave, 0.8, 0.3, 1.0);
  for (const auto& joint : joints) {
    auto front = camera_coords(joint, 0.0);
    auto side = camera_coords(joint, 90.0);
    // World z projects onto the side view's x axis negated, and the front
    // view's x becomes the side view's depth.
    CHECK(side[0] == doctest::Approx(-front[2]).epsilon(1e-12));
    CHECK(side[2] == doctest::Approx(front[0]).epsilon(1e-12));
    CHECK(side[1] == doctest::Approx(front[1]).epsilon(1e-12));
  }
}

TEST_CASE("pixel shift of a render equals rendering the shifted figure") {
  const int res = 64;
  const ShiftVector shift{9, -5};
  auto base = render_figure(MotionClass::kSquat, 0.9, 0.25, 1.0, 30.0, res);
  auto shifted_image = shift_image(base, shift);
  auto shifted_render =
      render_figure(MotionClass::kSquat, 0.9, 0.25, 1.0, 30.0, res,
                    {2.0 * shift.dx_pixels / res, 2.0 * shift.dy_pixels / res});
  CHECK((shifted_image - shifted_render).abs().mean().item<double>() < 0.02);
}

TEST_CASE("manifest round-trip is lossless") {
  auto dataset = generate_synthetic(small_spec(), 3, 4);
  const auto dir = std::filesystem::temp_directory_path() / "viewpose-manifest-test";
  std::filesystem::remove_all(dir);
  write_manifest(dataset, dir);
  auto loaded = load_manifest(dir);
  CHECK(loaded.resolution == dataset.resolution);
  CHECK(loaded.views_per_scene == dataset.views_per_scene);
  CHECK(datasets_equal(dataset, loaded));
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest load reports the offending sequence") {
  auto dataset = generate_synthetic(small_spec(), 3, 4);
  const auto dir = std::filesystem::temp_directory_path() / "viewpose-manifest-bad";
  std::filesystem::remove_all(dir);
  write_manifest(dataset, dir);

  // Drop one frame file of scene1.
  std::filesystem::remove(dir / "images/scene1/view1/f00003.png");
  try {
    load_manifest(dir);
    FAIL("expected a load error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("scene1") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("shift_image moves columns with background fill") {
  auto dataset = generate_synthetic(small_spec(), 1, 1);
  const auto& image = dataset.sequences[0].views[0].frames[0];
  const int dx = 5;
  auto shifted = shift_image(image, {dx, 0});
  const auto w = image.size(2);
  CHECK(torch::equal(shifted.slice(2, dx, w), image.slice(2, 0, w - dx)));
  CHECK((shifted.slice(2, 0, dx) - kBackgroundValue).abs().max().item<double>() == 0.0);

  // Round trip is identity on the interior region.
  auto back = shift_image(shifted, {-dx, 0});
  CHECK(torch::equal(back.slice(2, 0, w - dx), image.slice(2, 0, w - dx)));
}

TEST_CASE("training tuple determinism, flip consistency and shift oracle") {
  auto dataset = generate_synthetic(small_spec(), 2, 8);
  const auto& seq = dataset.sequences[0];

  auto rng1 = make_rng(3, "tuple");
  auto rng2 = make_rng(3, "tuple");
  auto a = make_training_tuple(seq, 0, 1, 4, rng1);
  auto b = make_training_tuple(seq, 0, 1, 4, rng2);
  CHECK(torch::equal(a.image_v, b.image_v));
  CHECK(torch::equal(a.augmented_w, b.augmented_w));
  CHECK(a.c1.dx_pixels == b.c1.dx_pixels);
  CHECK(a.flip_applied == b.flip_applied);

  // Augmented frames are exact pixel shifts of the (possibly flipped) frame k.
  CHECK(torch::equal(a.augmented_v, shift_image(a.image_v, a.c1)));
  CHECK(torch::equal(a.augmented_w, shift_image(a.image_w, a.c2)));

  // Shift magnitudes respect the W/4 bound.
  CHECK(std::abs(a.c1.dx_pixels) <= 8);
  CHECK(std::abs(a.c2.dy_pixels) <= 8);

  // Find a flipped and an unflipped draw; their images must be exact mirrors.
  auto rng3 = make_rng(3, "tuple");
  auto rng4 = make_rng(4, "tuple");
  TrainingTuple flipped, unflipped;
  bool have_f = false, have_u = false;
  for (int i = 0; i < 64 && !(have_f && have_u); ++i) {
    auto t = make_training_tuple(seq, 0, 1, 4, have_f ? rng4 : rng3);
    if (t.flip_applied && !have_f) {
      flipped = t;
      have_f = true;
    } else if (!t.flip_applied && !have_u) {
      unflipped = t;
      have_u = true;
    }
  }
  REQUIRE(have_f);
  REQUIRE(have_u);
  CHECK(torch::equal(flipped.image_v, flip_image(unflipped.image_v)));
  CHECK(torch::equal(flipped.image_w, flip_image(unflipped.image_w)));

  CHECK_THROWS_AS(make_training_tuple(seq, 0, 1, 99, rng1), std::invalid_argument);
}

TEST_CASE("single-frame sequences force m = n = k") {
  auto dataset = generate_synthetic(small_spec(), 1, 1);
  auto rng = make_rng(0, "tuple");
  auto tuple = make_training_tuple(dataset.sequences[0], 0, 1, 0, rng);
  CHECK(torch::equal(tuple.rotation_source_v, tuple.image_v));
  CHECK(torch::equal(tuple.rotation_source_w, tuple.image_w));
}

TEST_CASE("subsample_16 segment rules") {
  auto rng = make_rng(5, "subsample");

  auto identity = subsample_16(16, rng);
  for (int64_t i = 0; i < 16; ++i) CHECK(identity[i] == i);

  for (int trial = 0; trial < 20; ++trial) {
    auto picks = subsample_16(32, rng);
    for (int64_t i = 0; i < 16; ++i) {
      CHECK(picks[i] >= 2 * i);
      CHECK(picks[i] <= 2 * i + 1);
    }
  }

  for (int trial = 0; trial < 20; ++trial) {
    auto picks = subsample_16(45, rng);
    for (size_t i = 1; i < picks.size(); ++i) CHECK(picks[i] > picks[i - 1]);
  }

  // Shorter sequences share frames but stay in order.
  auto short_picks = subsample_16(5, rng);
  CHECK(short_picks.size() == 16);
  for (size_t i = 1; i < short_picks.size(); ++i) CHECK(short_picks[i] >= short_picks[i - 1]);

  CHECK_THROWS_AS(subsample_16(0, rng), std::invalid_argument);
}

TEST_CASE("clip_split_16 floor rule") {
  const std::vector<int64_t> three_clips{0, 16, 32};
  CHECK(clip_split_16(48) == three_clips);
  CHECK(clip_split_16(50) == three_clips);
  CHECK(clip_split_16(16) == std::vector<int64_t>(1, 0));
  CHECK_THROWS_AS(clip_split_16(15), std::invalid_argument);
}

TEST_CASE("graded quality labels track amplitude grades") {
  auto spec = small_spec();
  spec.graded_quality = true;
  auto dataset = generate_synthetic(spec, 10, 4);
  for (size_t i = 0; i < dataset.sequences.size(); ++i) {
    CHECK(*dataset.sequences[i].label == static_cast<int>(i % 5));
  }
}
