#pragma once

#include <cstdint>
#include <vector>

#include "alfa/rng.hpp"
#include "alfa/tensor.hpp"

namespace alfa {

// Images are tensors of shape {3, H, W} with values in [0, 1].

struct AugmentSpec {
  double hed_theta = 0.05;
  double rotation_deg = 10.0;
  double translate_frac = 0.1;
  double shear_deg = 1.0;
  int pixelate_factor = 2;
  std::uint64_t seed = 0;
};

struct TripletBatch {
  Tensor anchors;    // b x (3*H*W), flattened
  Tensor positives;  // transformed copies of the anchors
  Tensor negatives;  // drawn from other source images
  std::size_t count = 0;
};

// Scale-and-shift jitter in the HED stain space obtained by color
// deconvolution with the Ruifrok-Johnston H&E-DAB matrix.
Tensor hed_jitter(const Tensor& img, double theta, Rng& rng);

// Rotation/translation/shear about the image center, bilinear resampling,
// border-replicated fill.
Tensor random_affine(const Tensor& img, const AugmentSpec& spec, Rng& rng);

// Deterministic variant used by tests: explicit angle (degrees), pixel
// offsets, shear angles (degrees).
Tensor affine_transform(const Tensor& img, double angle_deg, double dx, double dy,
                        double shear_x_deg, double shear_y_deg);

// Average-pool by `factor`, then nearest-neighbor upsample to original size.
Tensor pixelate(const Tensor& img, int factor);

// Each anchor forms its own pseudo-class; the positive is a random
// composition of the three transforms (each applied with probability 0.5),
// the negative a uniformly drawn different source image.
TripletBatch make_triplet_batch(const std::vector<Tensor>& pool, const AugmentSpec& spec,
                                std::size_t batch, std::uint64_t seed);

}  // namespace alfa
