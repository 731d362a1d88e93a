#pragma once

#include <cmath>
#include <vector>

#include "drt/image.hpp"

namespace drt {

inline constexpr double kPsnrCap = 99.0;

// Peak signal-to-noise ratio in dB over all channels; identical images report
// the declared 99 dB cap instead of infinity.
inline double psnr(const Image& a, const Image& b) {
  check_usage(a.same_shape(b), "psnr needs equal image shapes");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= double(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Single-scale SSIM with the canonical constants: 11x11 Gaussian window with
// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1. The mean map is taken
// over window positions fully inside the image, averaged across channels.
inline double ssim(const Image& a, const Image& b) {
  check_usage(a.same_shape(b), "ssim needs equal image shapes");
  const int W = 11, R = 5;
  check_usage(a.width >= W && a.height >= W, "image is smaller than the SSIM window");
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

  std::vector<double> kernel(size_t(W) * W);
  double ksum = 0.0;
  for (int y = 0; y < W; ++y)
    for (int x = 0; x < W; ++x) {
      double dx = x - R, dy = y - R;
      double w = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      kernel[size_t(y) * W + size_t(x)] = w;
      ksum += w;
    }
  for (auto& w : kernel) w /= ksum;

  double total = 0.0;
  int64_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int cy = R; cy < a.height - R; ++cy) {
      for (int cx = R; cx < a.width - R; ++cx) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int y = 0; y < W; ++y)
          for (int x = 0; x < W; ++x) {
            double w = kernel[size_t(y) * W + size_t(x)];
            double va = a.at(cx + x - R, cy + y - R, c);
            double vb = b.at(cx + x - R, cy + y - R, c);
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        double var_a = aa - mu_a * mu_a;
        double var_b = bb - mu_b * mu_b;
        double cov = ab - mu_a * mu_b;
        double num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2);
        double den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
        total += num / den;
        count++;
      }
    }
  }
  return total / double(count);
}

// Intersection-over-union of two masks thresholded at 0.5. Two empty masks
// count as perfect agreement.
inline double mask_iou(const Image& a, const Image& b, double threshold = 0.5) {
  check_usage(a.same_shape(b), "IoU needs equal image shapes");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    bool pa = a.data[i] > threshold;
    bool pb = b.data[i] > threshold;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

struct MetricReport {
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

inline MetricReport evaluate_frames(const std::vector<Image>& rendered,
                                    const std::vector<Image>& reference) {
  check_usage(rendered.size() == reference.size() && !rendered.empty(),
              "metric evaluation needs matching non-empty frame lists");
  MetricReport rep;
  for (size_t i = 0; i < rendered.size(); ++i) {
    rep.psnr_per_frame.push_back(psnr(rendered[i], reference[i]));
    rep.ssim_per_frame.push_back(ssim(rendered[i], reference[i]));
    rep.mean_psnr += rep.psnr_per_frame.back();
    rep.mean_ssim += rep.ssim_per_frame.back();
  }
  rep.mean_psnr /= double(rendered.size());
  rep.mean_ssim /= double(rendered.size());
  return rep;
}

}  // namespace drt
