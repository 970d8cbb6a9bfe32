#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "valimetrics/image.hpp"
#include "valimetrics/perf.hpp"

namespace testing {

inline int rand_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline valimetrics::Image8 random_image(std::mt19937_64& rng, int w, int h, int c) {
  valimetrics::Image8 img(w, h, c);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rand_int(rng, 0, 255));
  return img;
}

inline valimetrics::GrayImage gray(int w, int h, std::vector<double> v) {
  return valimetrics::GrayImage(w, h, std::move(v));
}

inline valimetrics::GrayImage constant(int w, int h, double v) { return valimetrics::GrayImage(w, h, v); }

inline valimetrics::Detection det(int cls, double x0, double y0, double x1, double y1, double score = 1.0) {
  return {cls, {x0, y0, x1, y1}, score};
}

inline valimetrics::PredictionSet preds(std::vector<valimetrics::Detection> d, std::string model = "m") {
  return {"img", std::move(model), std::move(d)};
}

// Fresh directory under the build tree's temp area, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("valimetrics-test-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& p) const { return path / p; }
};

}  // namespace testing
