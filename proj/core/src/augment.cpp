#include "alfa/augment.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace alfa {

namespace {

constexpr double kOdFloor = 1e-8;
constexpr double kPi = 3.14159265358979323846;

void check_image(const Tensor& img, const char* op) {
  if (img.rank() != 3 || img.shape[0] != 3)
    throw ShapeError(std::string(op) + ": expected {3,H,W} image, got " + img.shape_str());
}

// Ruifrok-Johnston H&E-DAB stain vectors, row-normalized.
const Eigen::Matrix3d& stain_matrix() {
  static const Eigen::Matrix3d m = [] {
    Eigen::Matrix3d raw;
    raw << 0.65, 0.70, 0.29, 0.07, 0.99, 0.11, 0.27, 0.57, 0.78;
    for (int r = 0; r < 3; ++r) raw.row(r).normalize();
    return raw;
  }();
  return m;
}

const Eigen::Matrix3d& stain_inverse() {
  static const Eigen::Matrix3d inv = stain_matrix().inverse();
  return inv;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

Tensor hed_jitter(const Tensor& img, double theta, Rng& rng) {
  check_image(img, "hed_jitter");
  if (theta < 0.0) throw Error("hed_jitter: theta must be >= 0");
  double alpha[3], beta[3];
  for (int c = 0; c < 3; ++c) {
    alpha[c] = 1.0 + rng.uniform(-theta, theta);
    beta[c] = rng.uniform(-theta, theta);
  }
  const std::size_t hw = img.shape[1] * img.shape[2];
  Tensor out(img.shape);
  const Eigen::Matrix3d& M = stain_matrix();
  const Eigen::Matrix3d& Minv = stain_inverse();
  for (std::size_t p = 0; p < hw; ++p) {
    Eigen::Vector3d od;
    for (int c = 0; c < 3; ++c)
      od[c] = -std::log10(std::max(img.data[c * hw + p], kOdFloor));
    Eigen::Vector3d hed = Minv.transpose() * od;  // od = M^T hed
    for (int c = 0; c < 3; ++c) hed[c] = hed[c] * alpha[c] + beta[c];
    Eigen::Vector3d od2 = M.transpose() * hed;
    for (int c = 0; c < 3; ++c)
      out.data[c * hw + p] = clamp01(std::pow(10.0, -od2[c]));
  }
  return out;
}

Tensor affine_transform(const Tensor& img, double angle_deg, double dx, double dy,
                        double shear_x_deg, double shear_y_deg) {
  check_image(img, "affine");
  const std::size_t h = img.shape[1], w = img.shape[2];
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double a = angle_deg * kPi / 180.0;
  const double sx = std::tan(shear_x_deg * kPi / 180.0);
  const double sy = std::tan(shear_y_deg * kPi / 180.0);
  // Source coords = R(angle) * Shear * centered output coords, minus translation.
  const double ca = std::cos(a), sa = std::sin(a);
  // rotation * shear, 2x2
  const double m00 = ca + (-sa) * sy;
  const double m01 = ca * sx + (-sa);
  const double m10 = sa + ca * sy;
  const double m11 = sa * sx + ca;
  Tensor out(img.shape);
  const std::size_t hw = h * w;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double x = static_cast<double>(c) - cx - dx;
      const double y = static_cast<double>(r) - cy - dy;
      const double xs = m00 * x + m01 * y + cx;
      const double ys = m10 * x + m11 * y + cy;
      // bilinear with border replication
      const double xcl = std::min(std::max(xs, 0.0), static_cast<double>(w) - 1.0);
      const double ycl = std::min(std::max(ys, 0.0), static_cast<double>(h) - 1.0);
      const std::size_t x0 = static_cast<std::size_t>(std::floor(xcl));
      const std::size_t y0 = static_cast<std::size_t>(std::floor(ycl));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double fx = xcl - static_cast<double>(x0);
      const double fy = ycl - static_cast<double>(y0);
      for (int ch = 0; ch < 3; ++ch) {
        const double* plane = img.data.data() + static_cast<std::size_t>(ch) * hw;
        const double v00 = plane[y0 * w + x0];
        const double v01 = plane[y0 * w + x1];
        const double v10 = plane[y1 * w + x0];
        const double v11 = plane[y1 * w + x1];
        const double v = v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) +
                         v10 * (1 - fx) * fy + v11 * fx * fy;
        out.data[static_cast<std::size_t>(ch) * hw + r * w + c] = clamp01(v);
      }
    }
  }
  return out;
}

Tensor random_affine(const Tensor& img, const AugmentSpec& spec, Rng& rng) {
  const double angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg);
  const double dx =
      rng.uniform(-spec.translate_frac, spec.translate_frac) * static_cast<double>(img.shape[2]);
  const double dy =
      rng.uniform(-spec.translate_frac, spec.translate_frac) * static_cast<double>(img.shape[1]);
  const double shx = rng.uniform(-spec.shear_deg, spec.shear_deg);
  const double shy = rng.uniform(-spec.shear_deg, spec.shear_deg);
  return affine_transform(img, angle, dx, dy, shx, shy);
}

Tensor pixelate(const Tensor& img, int factor) {
  check_image(img, "pixelate");
  if (factor < 1) throw Error("pixelate: factor must be >= 1");
  const std::size_t h = img.shape[1], w = img.shape[2];
  if (static_cast<std::size_t>(factor) > std::min(h, w))
    throw Error("pixelate: factor exceeds image size");
  if (factor == 1) return img.detached();
  const std::size_t f = static_cast<std::size_t>(factor);
  const std::size_t bh = (h + f - 1) / f, bw = (w + f - 1) / f;
  Tensor out(img.shape);
  const std::size_t hw = h * w;
  for (int ch = 0; ch < 3; ++ch) {
    const double* src = img.data.data() + static_cast<std::size_t>(ch) * hw;
    double* dst = out.data.data() + static_cast<std::size_t>(ch) * hw;
    for (std::size_t br = 0; br < bh; ++br) {
      for (std::size_t bc = 0; bc < bw; ++bc) {
        const std::size_t r0 = br * f, r1 = std::min(r0 + f, h);
        const std::size_t c0 = bc * f, c1 = std::min(c0 + f, w);
        double sum = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) sum += src[r * w + c];
        const double avg = sum / static_cast<double>((r1 - r0) * (c1 - c0));
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) dst[r * w + c] = avg;
      }
    }
  }
  return out;
}

TripletBatch make_triplet_batch(const std::vector<Tensor>& pool, const AugmentSpec& spec,
                                std::size_t batch, std::uint64_t seed) {
  if (pool.size() < 2) throw Error("make_triplet_batch: pool needs >= 2 images");
  Rng rng(seed ^ spec.seed);
  const std::size_t dim = pool.empty() ? 0 : pool[0].size();
  TripletBatch out;
  out.count = batch;
  out.anchors = Tensor({std::max<std::size_t>(batch, 1), dim});
  out.positives = Tensor({std::max<std::size_t>(batch, 1), dim});
  out.negatives = Tensor({std::max<std::size_t>(batch, 1), dim});
  if (batch == 0) {
    out.anchors = Tensor({1, dim});
    out.positives = Tensor({1, dim});
    out.negatives = Tensor({1, dim});
    out.count = 0;
    return out;
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t ai = rng.uniform_index(pool.size());
    std::size_t ni = rng.uniform_index(pool.size() - 1);
    if (ni >= ai) ++ni;
    Tensor pos = pool[ai].detached();
    if (rng.uniform() < 0.5) pos = hed_jitter(pos, spec.hed_theta, rng);
    if (rng.uniform() < 0.5) pos = random_affine(pos, spec, rng);
    if (rng.uniform() < 0.5) pos = pixelate(pos, spec.pixelate_factor);
    for (std::size_t i = 0; i < dim; ++i) {
      out.anchors.data[b * dim + i] = pool[ai].data[i];
      out.positives.data[b * dim + i] = pos.data[i];
      out.negatives.data[b * dim + i] = pool[ni].data[i];
    }
  }
  return out;
}

}  // namespace alfa
