#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "valimetrics/image.hpp"
#include "valimetrics/manifest.hpp"

namespace valimetrics {

struct CompressionStats {
  int quality = 0;
  std::size_t n = 0;
  double factor_mean = 0.0;
  double factor_std = 0.0;  // sample standard deviation; 0 when n == 1
};

struct JpegRoundTrip {
  std::vector<std::uint8_t> encoded;
  Image8 decoded;
  double factor = 0.0;
};

// Encodes at `quality`, decodes back, and reports the compression factor
// against the raw 8-bit pixel size.
JpegRoundTrip jpeg_round_trip(const Image8& image, int quality);

// Writes `<out_dir>/<stem>.jpg` and returns its record.
ImageRecord apply_jpeg(const ImageRecord& image, int quality, const std::filesystem::path& out_dir);

double compression_factor(std::uint64_t raw_bytes, std::uint64_t encoded_bytes);

// Mean and sample standard deviation via two passes.
CompressionStats summarize_factors(int quality, std::span<const double> factors);

// Images are read once and encoded at every quality; stats are reported in
// the order the qualities were given.
std::vector<CompressionStats> sweep(const std::filesystem::path& image_dir,
                                    const std::vector<int>& qualities, int jobs = 1);

// JPEG-compresses every image of `in_dir` (one sequence level deep, like
// pairing) into `out_dir`, keeping relative paths and stems.
// When `factors` is given it receives one compression factor per image.
std::vector<ImageRecord> jpeg_directory(const std::filesystem::path& in_dir,
                                        const std::filesystem::path& out_dir, int quality,
                                        int jobs = 1, std::vector<double>* factors = nullptr);

std::string compression_stats_csv(const std::vector<CompressionStats>& stats);

// Image files of a directory (flat plus one sequence level), sorted.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace valimetrics
