#include "valimetrics/modification.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "valimetrics/error.hpp"
#include "valimetrics/parallel.hpp"

namespace fs = std::filesystem;

namespace valimetrics {

namespace {

void check_quality(int quality) {
  if (quality < 1 || quality > 100) {
    throw Error(Errc::QualityOutOfRange, "JPEG quality must be in [1,100], got " + std::to_string(quality));
  }
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::IoError, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      out.push_back(entry.path());
    } else if (entry.is_directory()) {
      for (const auto& sub : fs::directory_iterator(entry.path())) {
        if (sub.is_regular_file() && is_image_file(sub.path())) out.push_back(sub.path());
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double compression_factor(std::uint64_t raw_bytes, std::uint64_t encoded_bytes) {
  if (encoded_bytes == 0) throw Error(Errc::ZeroEncodedSize, "encoded size is zero");
  return static_cast<double>(raw_bytes) / static_cast<double>(encoded_bytes);
}

JpegRoundTrip jpeg_round_trip(const Image8& image, int quality) {
  check_quality(quality);
  JpegRoundTrip out;
  out.encoded = encode_jpeg(image, quality);
  out.decoded = decode_jpeg(out.encoded);
  if (out.decoded.width != image.width || out.decoded.height != image.height) {
    throw Error(Errc::EncodeError, "decoded JPEG changed dimensions");
  }
  out.factor = compression_factor(image.raw_bytes(), out.encoded.size());
  return out;
}

ImageRecord apply_jpeg(const ImageRecord& image, int quality, const fs::path& out_dir) {
  check_quality(quality);
  const Image8 pixels = read_image(image.path);
  const auto encoded = encode_jpeg(pixels, quality);
  const fs::path target = out_dir / (image.id + ".jpg");
  write_file(target, encoded);
  return ImageRecord::from_file(target);
}

CompressionStats summarize_factors(int quality, std::span<const double> factors) {
  CompressionStats s;
  s.quality = quality;
  s.n = factors.size();
  if (factors.empty()) return s;
  double sum = 0.0;
  for (double f : factors) sum += f;
  s.factor_mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double f : factors) ss += (f - s.factor_mean) * (f - s.factor_mean);
    s.factor_std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::vector<CompressionStats> sweep(const fs::path& image_dir, const std::vector<int>& qualities,
                                    int jobs) {
  if (qualities.empty()) throw Error(Errc::EmptySweep, "no JPEG qualities given");
  for (int q : qualities) check_quality(q);
  const auto files = list_images(image_dir);
  if (files.empty()) throw Error(Errc::EmptySweep, "no images in " + image_dir.string());

  // factors[q][i], filled per image so each file is decoded once.
  std::vector<std::vector<double>> factors(qualities.size(), std::vector<double>(files.size()));
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const Image8 image = read_image(files[i]);
    for (std::size_t q = 0; q < qualities.size(); ++q) {
      const auto encoded = encode_jpeg(image, qualities[q]);
      factors[q][i] = compression_factor(image.raw_bytes(), encoded.size());
    }
  });
  std::vector<CompressionStats> stats;
  for (std::size_t q = 0; q < qualities.size(); ++q) {
    stats.push_back(summarize_factors(qualities[q], factors[q]));
  }
  return stats;
}

std::vector<ImageRecord> jpeg_directory(const fs::path& in_dir, const fs::path& out_dir,
                                        int quality, int jobs, std::vector<double>* factors) {
  check_quality(quality);
  const auto files = list_images(in_dir);
  std::vector<ImageRecord> out(files.size());
  std::vector<double> local(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const fs::path rel_parent = fs::relative(files[i].parent_path(), in_dir);
    const Image8 pixels = read_image(files[i]);
    const auto encoded = encode_jpeg(pixels, quality);
    const fs::path target = (out_dir / rel_parent / (files[i].stem().string() + ".jpg")).lexically_normal();
    write_file(target, encoded);
    out[i] = ImageRecord::from_file(target);
    local[i] = compression_factor(pixels.raw_bytes(), encoded.size());
  });
  if (factors) *factors = std::move(local);
  return out;
}

std::string compression_stats_csv(const std::vector<CompressionStats>& stats) {
  std::string out = "quality,n,factor_mean,factor_std\n";
  for (const auto& s : stats) {
    out += fmt::format("{},{},{:.6f},{:.6f}\n", s.quality, s.n, s.factor_mean, s.factor_std);
  }
  return out;
}

}  // namespace valimetrics
