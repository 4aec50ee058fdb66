#include <algorithm>
#include <cmath>

#include "alfa/augment.hpp"
#include "alfa/rng.hpp"
#include "alfa/tensor.hpp"
#include "doctest.h"

using namespace alfa;

namespace {

Tensor random_image(std::size_t h, std::size_t w, Rng& rng, double lo = 0.05, double hi = 0.95) {
  Tensor img({3, h, w});
  for (auto& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("hed_jitter theta=0 is the identity (round trip through stain space)") {
  Rng rng(1);
  Tensor img = random_image(10, 10, rng);  // 100 random pixels
  Rng jr(2);
  Tensor out = hed_jitter(img, 0.0, jr);
  CHECK(max_abs_diff(img, out) < 1e-6);
}

TEST_CASE("hed_jitter theta=0.5 on mid-gray: deterministic, channel means shifted") {
  Tensor img({3, 8, 8});
  for (auto& v : img.data) v = 0.5;
  Rng a(7), b(7);
  Tensor o1 = hed_jitter(img, 0.5, a);
  Tensor o2 = hed_jitter(img, 0.5, b);
  CHECK(max_abs_diff(o1, o2) == 0.0);
  const std::size_t hw = 64;
  for (int ch = 0; ch < 3; ++ch) {
    double mean = 0;
    for (std::size_t p = 0; p < hw; ++p) mean += o1.data[ch * hw + p];
    mean /= hw;
    CHECK(std::abs(mean - 0.5) > 1e-4);
  }
}

TEST_CASE("hed_jitter rejects negative theta and non-image shapes") {
  Rng rng(0);
  Tensor img({3, 4, 4});
  CHECK_THROWS_AS(hed_jitter(img, -0.1, rng), Error);
  Tensor bad({2, 4, 4});
  CHECK_THROWS_AS(hed_jitter(bad, 0.1, rng), ShapeError);
}

TEST_CASE("affine with zero ranges is the identity") {
  Rng rng(3);
  Tensor img = random_image(7, 9, rng);
  Tensor out = affine_transform(img, 0, 0, 0, 0, 0);
  CHECK(max_abs_diff(img, out) < 1e-12);
}

TEST_CASE("90 degree rotation of a 2x2 image") {
  // [[a,b],[c,d]] -> [[b,d],[a,c]] on each channel
  Tensor img({3, 2, 2});
  const double a = 0.1, b = 0.2, c = 0.3, d = 0.4;
  for (int ch = 0; ch < 3; ++ch) {
    img.data[ch * 4 + 0] = a;
    img.data[ch * 4 + 1] = b;
    img.data[ch * 4 + 2] = c;
    img.data[ch * 4 + 3] = d;
  }
  Tensor out = affine_transform(img, 90, 0, 0, 0, 0);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(out.data[ch * 4 + 0] == doctest::Approx(b).epsilon(1e-9));
    CHECK(out.data[ch * 4 + 1] == doctest::Approx(d).epsilon(1e-9));
    CHECK(out.data[ch * 4 + 2] == doctest::Approx(a).epsilon(1e-9));
    CHECK(out.data[ch * 4 + 3] == doctest::Approx(c).epsilon(1e-9));
  }
}

TEST_CASE("translation by half the width replicates the border") {
  const std::size_t w = 8, h = 8;
  Tensor img({3, h, w});
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        img.data[ch * h * w + r * w + c] = static_cast<double>(c) / (w - 1);
  Tensor out = affine_transform(img, 0, 0.5 * w, 0, 0, 0);
  // columns that sample left of the image are filled with column 0
  std::size_t filled = 0;
  for (std::size_t c = 0; c < w; ++c) {
    bool all_border = true;
    for (std::size_t r = 0; r < h; ++r)
      if (out.data[r * w + c] != img.data[r * w + 0]) all_border = false;
    if (all_border) ++filled;
  }
  CHECK(filled >= w / 2);
}

TEST_CASE("pixelate identity cases") {
  Rng rng(5);
  Tensor img = random_image(6, 6, rng);
  CHECK(max_abs_diff(pixelate(img, 1), img) == 0.0);

  Tensor flat({3, 6, 6});
  for (auto& v : flat.data) v = 0.42;
  CHECK(max_abs_diff(pixelate(flat, 6), flat) < 1e-12);
}

TEST_CASE("pixelate factor 2 averages blocks") {
  Tensor img({3, 2, 2});
  for (int ch = 0; ch < 3; ++ch) {
    img.data[ch * 4 + 0] = 0.0;
    img.data[ch * 4 + 1] = 1.0;
    img.data[ch * 4 + 2] = 0.0;
    img.data[ch * 4 + 3] = 1.0;
  }
  Tensor out = pixelate(img, 2);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data[i] == doctest::Approx(0.5));
}

TEST_CASE("pixelate rejects factors larger than the image") {
  Rng rng(6);
  Tensor img = random_image(4, 4, rng);
  CHECK_THROWS_AS(pixelate(img, 5), Error);
  CHECK_THROWS_AS(pixelate(img, 0), Error);
}

TEST_CASE("triplet batch from a pool of two forces the negative") {
  Rng rng(8);
  std::vector<Tensor> pool = {random_image(5, 5, rng), random_image(5, 5, rng)};
  AugmentSpec spec;
  spec.seed = 0;
  TripletBatch tb = make_triplet_batch(pool, spec, 4, 11);
  REQUIRE(tb.count == 4);
  const std::size_t dim = 3 * 5 * 5;
  REQUIRE(tb.anchors.shape == std::vector<std::size_t>{4, dim});
  for (std::size_t i = 0; i < 4; ++i) {
    // identify the anchor source, negative must be the other image
    int src = -1;
    for (int s = 0; s < 2; ++s) {
      bool same = true;
      for (std::size_t j = 0; j < dim; ++j)
        if (tb.anchors.data[i * dim + j] != pool[s].data[j]) same = false;
      if (same) src = s;
    }
    REQUIRE(src >= 0);
    for (std::size_t j = 0; j < dim; ++j)
      CHECK(tb.negatives.data[i * dim + j] == pool[1 - src].data[j]);
  }
}

TEST_CASE("triplet batch is deterministic under the seed") {
  Rng rng(9);
  std::vector<Tensor> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(random_image(6, 6, rng));
  AugmentSpec spec;
  TripletBatch a = make_triplet_batch(pool, spec, 8, 77);
  TripletBatch b = make_triplet_batch(pool, spec, 8, 77);
  CHECK(max_abs_diff(a.anchors, b.anchors) == 0.0);
  CHECK(max_abs_diff(a.positives, b.positives) == 0.0);
  CHECK(max_abs_diff(a.negatives, b.negatives) == 0.0);
  TripletBatch c = make_triplet_batch(pool, spec, 8, 78);
  CHECK(max_abs_diff(a.positives, c.positives) > 0.0);
}

TEST_CASE("triplet batch edge cases") {
  Rng rng(10);
  std::vector<Tensor> pool = {random_image(5, 5, rng), random_image(5, 5, rng)};
  AugmentSpec spec;
  TripletBatch empty = make_triplet_batch(pool, spec, 0, 1);
  CHECK(empty.count == 0);
  std::vector<Tensor> tiny = {random_image(5, 5, rng)};
  CHECK_THROWS_AS(make_triplet_batch(tiny, spec, 2, 1), Error);
}
