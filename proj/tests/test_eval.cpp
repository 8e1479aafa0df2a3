#include "testing.hpp"

#include <algorithm>
#include <random>

#include "viewpose/eval.hpp"

using namespace viewpose;

TEST_CASE("accuracy basics") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({0, 1, 2, 3}, {0, 1, 0, 0}) == 0.5);
  CHECK_THROWS_AS(accuracy({1}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy({}, {}), std::invalid_argument);
}

TEST_CASE("accuracy is invariant under joint permutation") {
  std::mt19937_64 rng(12);
  std::vector<int> predictions{0, 1, 1, 2, 3, 0, 2, 2};
  std::vector<int> labels{0, 1, 2, 2, 3, 1, 0, 2};
  const double base = accuracy(predictions, labels);
  std::vector<size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> p, l;
    for (size_t i : order) {
      p.push_back(predictions[i]);
      l.push_back(labels[i]);
    }
    CHECK(accuracy(p, l) == base);
  }
}

TEST_CASE("spearman on monotone sequences") {
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_rank_correlation({4, 3, 2, 1}, {10, 20, 30, 40}) == doctest::Approx(-1.0));
}

TEST_CASE("spearman matches the closed-form tie-free formula") {
  // d = (0,0,0,1,-1): 1 - 6*2/(5*24) = 0.9
  CHECK(spearman_rank_correlation({1, 2, 3, 5, 4}, {1, 2, 3, 4, 5}) == doctest::Approx(0.9));

  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 8;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = i;
      b[i] = i;
    }
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    double d2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = a[i] - b[i];  // values 0..n-1 are their own ranks (offset 1)
      d2 += d * d;
    }
    const double closed_form = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    CHECK(std::abs(spearman_rank_correlation(a, b) - closed_form) < 1e-12);
  }
}

TEST_CASE("spearman handles ties with average ranks") {
  // truth has a tie; average ranks keep the result defined and symmetric.
  const double r = spearman_rank_correlation({1, 2, 3, 4}, {1, 2, 2, 3});
  CHECK(r > 0.9);
  CHECK(r < 1.0);
}

TEST_CASE("spearman error cases") {
  CHECK_THROWS_AS(spearman_rank_correlation({1}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(spearman_rank_correlation({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(spearman_rank_correlation({1, 2, 3}, {5, 5, 5}), std::invalid_argument);
}

TEST_CASE("cross-view invariance trivial cases") {
  torch::manual_seed(4);
  ModelConfig config{4, 16, 0.0};
  AutoEncoder model(config);

  SyntheticSceneSpec spec;
  spec.resolution = 16;
  spec.seed = 9;
  auto dataset = generate_synthetic(spec, 2, 3);

  // Identical images in both views give exactly zero for any encoder.
  auto identical = dataset;
  for (auto& seq : identical.sequences) seq.views[1].frames = seq.views[0].frames;
  CHECK(cross_view_invariance(model, identical) == 0.0);

  CHECK(cross_view_invariance(model, dataset) > 0.0);

  // Symmetric in the two views.
  auto swapped = dataset;
  for (auto& seq : swapped.sequences) std::swap(seq.views[0], seq.views[1]);
  CHECK(cross_view_invariance(model, swapped) ==
        doctest::Approx(cross_view_invariance(model, dataset)).epsilon(1e-12));

  MultiViewDataset empty;
  CHECK_THROWS_AS(cross_view_invariance(model, empty), std::invalid_argument);
}

TEST_CASE("equivariance residual runs and is finite") {
  torch::manual_seed(5);
  ModelConfig config{4, 16, 0.0};
  AutoEncoder model(config);

  SyntheticSceneSpec spec;
  spec.resolution = 16;
  spec.seed = 10;
  auto dataset = generate_synthetic(spec, 2, 3);

  auto rng = make_rng(1, "equiv-eval");
  const double residual = equivariance_residual(model, dataset, rng);
  CHECK(std::isfinite(residual));
  CHECK(residual >= 0.0);
}

TEST_CASE("eval report serializes") {
  EvalReport report;
  report.metric = "accuracy";
  report.value = 0.75;
  report.sample_count = 16;
  report.protocol = "CV";
  report.breakdown["class0"] = 1.0;
  auto json = report.to_json();
  CHECK(json.find("\"accuracy\"") != std::string::npos);
  CHECK(json.find("\"CV\"") != std::string::npos);
}
