#pragma once

#include <cmath>

#include "drt/image.hpp"

namespace drt {

struct LossConfig {
  double photometric_weight = 1.0;
  double silhouette_weight = 1.0;
  double distill_weight = 0.1;  // occlusion distillation toward hard shadows
  double eps_bce = 1e-4;        // probability clamp for the silhouette term
  double eps_photo = 1e-8;      // smoothing inside the quadratic terms

  void validate() const {
    check_config(photometric_weight >= 0.0 && silhouette_weight >= 0.0 &&
                     distill_weight >= 0.0,
                 "loss weights must be non-negative");
    check_config(eps_bce > 0.0 && eps_bce < 0.5, "probability clamp must lie in (0, 0.5)");
    check_config(eps_photo > 0.0, "photometric smoothing must be positive");
  }
};

// Photometric residual loss: the mean of an L1, an L2 (root-mean-square), and
// a square-root-of-RMSE term over all pixel-channels. The quadratic terms are
// smoothed so the gradient exists at zero residual; the quartic root uses the
// squared epsilon, keeping the zero-residual offset within 1e-4.
inline double photometric_loss(const Image& ref, const Image& img, double eps = 1e-8) {
  check_usage(ref.same_shape(img), "photometric loss needs equal image shapes");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i) {
    double d = img.data[i] - ref.data[i];
    abs_sum += std::fabs(d);
    sq_sum += d * d;
  }
  double P = double(img.data.size());
  double s2 = sq_sum / P;
  return (abs_sum / P + std::sqrt(s2 + eps) + std::pow(s2 + eps * eps, 0.25)) / 3.0;
}

// Derivative of photometric_loss with respect to each rendered pixel-channel,
// used to seed the per-ray backward passes.
inline Image photometric_seed(const Image& ref, const Image& img, double eps = 1e-8) {
  check_usage(ref.same_shape(img), "photometric loss needs equal image shapes");
  double sq_sum = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i) {
    double d = img.data[i] - ref.data[i];
    sq_sum += d * d;
  }
  double P = double(img.data.size());
  double s2 = sq_sum / P;
  double l2_scale = 1.0 / (P * std::sqrt(s2 + eps));
  double rt_scale = 0.5 / (P * std::pow(s2 + eps * eps, 0.75));
  Image seed{img.width, img.height, img.channels};
  for (size_t i = 0; i < img.data.size(); ++i) {
    double d = img.data[i] - ref.data[i];
    double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    seed.data[i] = (sign / P + d * l2_scale + d * rt_scale) / 3.0;
  }
  return seed;
}

// Mean binary cross-entropy between a {0,1} mask and an estimated silhouette,
// with the estimate clamped away from the log singularities.
inline double silhouette_loss(const Image& mask, const Image& est, double eps_bce = 1e-4) {
  check_usage(mask.same_shape(est), "silhouette loss needs equal image shapes");
  double acc = 0.0;
  for (size_t i = 0; i < est.data.size(); ++i) {
    double m = std::clamp(est.data[i], eps_bce, 1.0 - eps_bce);
    double r = mask.data[i];
    acc -= r * std::log(m) + (1.0 - r) * std::log(1.0 - m);
  }
  return acc / double(est.data.size());
}

// Derivative of silhouette_loss with respect to each estimate; zero inside
// the clamped bands.
inline Image silhouette_seed(const Image& mask, const Image& est, double eps_bce = 1e-4) {
  check_usage(mask.same_shape(est), "silhouette loss needs equal image shapes");
  Image seed{est.width, est.height, est.channels};
  double P = double(est.data.size());
  for (size_t i = 0; i < est.data.size(); ++i) {
    double m = est.data[i];
    if (m <= eps_bce || m >= 1.0 - eps_bce) {
      seed.data[i] = 0.0;
      continue;
    }
    seed.data[i] = (m - mask.data[i]) / (m * (1.0 - m)) / P;
  }
  return seed;
}

}  // namespace drt
