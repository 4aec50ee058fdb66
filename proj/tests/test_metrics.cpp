#include <algorithm>
#include <cmath>
#include <vector>

#include "alfa/metrics.hpp"
#include "alfa/rng.hpp"
#include "doctest.h"

using namespace alfa;

TEST_CASE("accuracy") {
  CHECK(accuracy({1, 2, 0}, {1, 2, 0}) == doctest::Approx(100.0));
  CHECK(accuracy({0, 1, 1, 0}, {0, 1, 0, 0}) == doctest::Approx(75.0));

  // joint permutation invariance
  std::vector<std::size_t> p = {0, 1, 1, 0, 2};
  std::vector<std::size_t> l = {0, 1, 0, 0, 2};
  std::vector<std::size_t> p2 = {2, 0, 1, 0, 1};
  std::vector<std::size_t> l2 = {2, 0, 1, 0, 0};
  CHECK(accuracy(p, l) == doctest::Approx(accuracy(p2, l2)));

  CHECK_THROWS_AS(accuracy({0}, {0, 1}), Error);
  CHECK_THROWS_AS(accuracy({}, {}), Error);
}

TEST_CASE("macro recall") {
  CHECK(macro_recall({0, 1, 2}, {0, 1, 2}, 3) == doctest::Approx(100.0));

  // class 0 recalled 1/2, class 1 recalled 2/2 -> (50 + 100) / 2
  CHECK(macro_recall({0, 1, 1, 1}, {0, 0, 1, 1}, 2) == doctest::Approx(75.0));

  // constant predictor on balanced binary labels
  CHECK(macro_recall({0, 0, 0, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(50.0));

  // absent classes are excluded from the average
  CHECK(macro_recall({0, 0}, {0, 0}, 5) == doctest::Approx(100.0));
}

TEST_CASE("macro AUROC oracles") {
  // perfectly separated
  Tensor sep = Tensor::matrix(4, 2, {0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.2, 0.8});
  CHECK(auroc_macro(sep, {0, 0, 1, 1}) == doctest::Approx(100.0));

  // all-equal scores: midrank convention gives 50
  Tensor flat = Tensor::matrix(4, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  CHECK(auroc_macro(flat, {0, 0, 1, 1}) == doctest::Approx(50.0));

  // positives {0.9, 0.4}, negatives {0.6, 0.1}: 3 of 4 pairs ordered
  Tensor hand = Tensor::matrix(4, 2, {0.1, 0.9, 0.6, 0.4, 0.4, 0.6, 0.9, 0.1});
  // class-1 column scores: 0.9, 0.4 for label-1 rows; 0.6, 0.1 for label-0.
  // class-0 column mirrors it, so the macro average is also 75.
  CHECK(auroc_macro(hand, {1, 1, 0, 0}) == doctest::Approx(75.0));

  // single-class labels leave nothing rankable
  CHECK_THROWS_AS(auroc_macro(sep, {0, 0, 0, 0}), Error);
}

TEST_CASE("macro AUROC matches exhaustive pair counting") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + rng.uniform_index(9);  // up to 12
    const std::size_t n_c = 2 + rng.uniform_index(2);
    Tensor scores({n, n_c});
    for (auto& v : scores.data) v = rng.uniform(0.0, 1.0);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.uniform_index(n_c));

    double sum = 0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < n_c; ++c) {
      double pairs = 0, won = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != c) continue;
        for (std::size_t j = 0; j < n; ++j) {
          if (labels[j] == c) continue;
          pairs += 1;
          if (scores.at(i, c) > scores.at(j, c)) won += 1;
          else if (scores.at(i, c) == scores.at(j, c)) won += 0.5;
        }
      }
      if (pairs > 0) {
        sum += 100.0 * won / pairs;
        ++counted;
      }
    }
    if (counted == 0) continue;
    CHECK(auroc_macro(scores, labels) ==
          doctest::Approx(sum / static_cast<double>(counted)).epsilon(1e-9));
  }
}

TEST_CASE("PCA collapses collinear points") {
  Tensor line({10, 3});
  for (std::size_t i = 0; i < 10; ++i) {
    line.at(i, 0) = 1.0 * i;
    line.at(i, 1) = 2.0 * i;
    line.at(i, 2) = -0.5 * i;
  }
  Tensor proj = pca_project(line);
  REQUIRE(proj.shape == std::vector<std::size_t>{10, 2});
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(proj.at(i, 1)) < 1e-8);
}

TEST_CASE("PCA of planar data preserves pairwise distances") {
  Rng rng(9);
  Tensor x({8, 2});
  for (auto& v : x.data) v = rng.uniform(-3.0, 3.0);
  Tensor proj = pca_project(x);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double da = std::hypot(x.at(i, 0) - x.at(j, 0), x.at(i, 1) - x.at(j, 1));
      double db = std::hypot(proj.at(i, 0) - proj.at(j, 0), proj.at(i, 1) - proj.at(j, 1));
      CHECK(std::abs(da - db) < 1e-8);
    }
}

TEST_CASE("PCA orders components by variance and is deterministic") {
  Rng rng(11);
  Tensor x({40, 6});
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t c = 0; c < 6; ++c)
      x.at(i, c) = rng.uniform(-1.0, 1.0) * (c == 0 ? 5.0 : 1.0);
  Tensor a = pca_project(x);
  Tensor b = pca_project(x);
  CHECK(a.data == b.data);
  double v0 = 0, v1 = 0, m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    m0 += a.at(i, 0);
    m1 += a.at(i, 1);
  }
  m0 /= 40;
  m1 /= 40;
  for (std::size_t i = 0; i < 40; ++i) {
    v0 += (a.at(i, 0) - m0) * (a.at(i, 0) - m0);
    v1 += (a.at(i, 1) - m1) * (a.at(i, 1) - m1);
  }
  CHECK(v0 >= v1);
}

TEST_CASE("PCA rejects degenerate input") {
  Tensor tiny({2, 3});
  CHECK_THROWS_AS(pca_project(tiny), Error);
  Tensor thin({5, 1});
  CHECK_THROWS_AS(pca_project(thin), Error);
  Tensor zeros({5, 3});  // rank 0 after centering
  CHECK_THROWS_AS(pca_project(zeros), Error);
}
