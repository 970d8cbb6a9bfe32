#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "valimetrics/image.hpp"

namespace valimetrics {

// C x H x W activations stored channel-major, (c,h,w) order.
struct FeatureMap {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(std::uint32_t c, std::uint32_t h, std::uint32_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t positions() const { return static_cast<std::size_t>(height) * width; }
  float& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

struct FeatureStack {
  std::string extractor_id;
  std::vector<FeatureMap> layers;
};

struct LpipsWeights {
  std::vector<std::vector<float>> layers;  // one weight per channel, >= 0

  static LpipsWeights uniform(const FeatureStack& shape);
};

// VFTS / VFTW little-endian containers.
std::vector<std::uint8_t> encode_feature_stack(const FeatureStack& stack);
FeatureStack decode_feature_stack(std::span<const std::uint8_t> bytes);
FeatureStack load_feature_stack(const std::filesystem::path& path);
void save_feature_stack(const std::filesystem::path& path, const FeatureStack& stack);

std::vector<std::uint8_t> encode_lpips_weights(const LpipsWeights& weights);
LpipsWeights decode_lpips_weights(std::span<const std::uint8_t> bytes);
LpipsWeights load_lpips_weights(const std::filesystem::path& path);
void save_lpips_weights(const std::filesystem::path& path, const LpipsWeights& weights);

// Channel-normalized, weighted squared feature differences, averaged over
// spatial positions and summed over layers.
double lpips(const FeatureStack& ref, const FeatureStack& mod, const LpipsWeights& weights);

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t n_samples = 0;
};

inline constexpr double kCovarianceShrinkage = 1e-6;

// Spatial positions are the samples; covariance uses 1/(n-1) and is shrunk
// by shrinkage * tr(cov)/C on the diagonal.
GaussianSummary gaussian_summary(const FeatureMap& map, double shrinkage = kCovarianceShrinkage);

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}), clamped to >= 0.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Concatenated global-average-pooled channels of every layer.
std::vector<double> pooled_feature_vector(const FeatureStack& stack);

// Area-averaged downsample of the luma plane to side x side, flattened.
std::vector<double> luma_vector(const GrayImage& luma, int side = 32);

}  // namespace valimetrics
