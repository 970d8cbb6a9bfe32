#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace valimetrics {

// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t raw_bytes() const { return data.size(); }

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Single-plane real image, row-major, values nominally in [0,255].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}
  GrayImage(int w, int h, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// BT.601 luma for RGB, a plain copy for gray.
GrayImage to_luma(const Image8& image);

// Splits an interleaved image into one GrayImage per channel.
std::vector<GrayImage> split_channels(const Image8& image);

// Intensity level of a real-valued pixel: rounded to nearest, clamped to [0,255].
int intensity_level(double v);

enum class Codec { Png, Jpeg };

struct ImageHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  Codec codec = Codec::Png;
};

// Codec detection is by content signature, not by extension.
ImageHeader probe_image(const std::filesystem::path& path);
Image8 read_image(const std::filesystem::path& path);
Image8 decode_image(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const Image8& image);
std::vector<std::uint8_t> encode_png(const Image8& image);

// Baseline JPEG via libjpeg with Annex-K tables scaled by `quality`.
// Chroma is 4:2:0 below quality 90 and 4:4:4 from 90 up.
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality);
Image8 decode_jpeg(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace valimetrics
