#pragma once

#include <array>
#include <optional>
#include <string>

#include "valimetrics/image.hpp"

namespace valimetrics {

// Normalized 256-bin intensity histogram.
struct Histogram256 {
  std::array<double, 256> bins{};
  std::size_t total = 0;

  static Histogram256 of(const GrayImage& image);
};

double mse(const GrayImage& ref, const GrayImage& mod);
// Per-channel MSE averaged over channels.
double mse(const Image8& ref, const Image8& mod);

// Returns +infinity when the images are identical.
double psnr_from_mse(double mse_value);
double psnr(const GrayImage& ref, const GrayImage& mod);

// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows,
// C1 = (0.01*255)^2, C2 = (0.03*255)^2. Needs min(width,height) >= 11.
double ssim(const GrayImage& ref, const GrayImage& mod);

// Zero-normalized global cross-correlation. Throws ZeroVariance.
double ncc(const GrayImage& ref, const GrayImage& mod);

// Bits, over a 64x64 joint histogram (bin = level/4).
double mutual_information(const GrayImage& ref, const GrayImage& mod);
// Marginal entropy at 64 bins, the upper bound for mutual_information.
double entropy64(const GrayImage& image);

// 1-D earth mover's distance between intensity histograms, in intensity levels.
double emd(const Histogram256& ref, const Histogram256& mod);
double emd(const GrayImage& ref, const GrayImage& mod);

double entropy(const Histogram256& hist);
double entropy(const GrayImage& image);
double entropy_delta(const GrayImage& ref, const GrayImage& mod);

struct QualityVector {
  std::string pair_id;
  std::string modification;
  std::optional<double> mse, psnr, ssim, ncc, lpips, cosine, emd, mutual_info, fid, entropy_delta;
  // Sidecar values for the per-image entropy reading.
  std::optional<double> entropy_ref, entropy_mod;
  std::string cosine_mode;  // "features" or "luma32"
};

}  // namespace valimetrics
