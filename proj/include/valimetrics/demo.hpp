#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "valimetrics/image.hpp"
#include "valimetrics/perceptual.hpp"
#include "valimetrics/perf.hpp"

namespace valimetrics {

inline constexpr const char* kDemoExtractorId = "demo-randconv-v1";

// Fixed random 3x3 convolutions: 8 channels at 1/2 resolution, 16 at 1/4.
FeatureStack demo_features(const Image8& image);

struct DemoScene {
  Image8 image;
  std::vector<Detection> objects;
  ClassMask mask;
};

// Gradient background, a few filled shapes, mild noise. Shapes keep a margin
// from the border so shifted boxes stay inside the frame.
DemoScene demo_scene(int width, int height, std::uint64_t seed);

// Random class-labelled boxes over an existing image; the mask is the boxes
// rasterized in draw order.
DemoScene boxes_over(Image8 image, std::uint64_t seed);

struct DemoOptions {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  int scenes = 20;
  // Take reference images from here (sorted, first `scenes`) instead of
  // drawing procedural scenes. Boxes are still synthetic.
  std::optional<std::filesystem::path> reference_dir;
  std::vector<int> qualities{90, 50, 30, 15, 5};
  int width = 160;
  int height = 120;
  // Box shift as a fraction of box size is alpha * mse, with alpha chosen so
  // the worst pair in the corpus shifts by this fraction.
  double max_shift = 0.3;
};

struct DemoCorpus {
  std::filesystem::path config;
  std::size_t pairs = 0;
};

// Writes images/, features/, predictions/, masks/ and run.toml under out_dir.
DemoCorpus build_demo(const DemoOptions& options);

}  // namespace valimetrics
