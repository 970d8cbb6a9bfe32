#include "valimetrics/demo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "valimetrics/error.hpp"
#include "valimetrics/modification.hpp"
#include "valimetrics/pipeline.hpp"
#include "valimetrics/quality.hpp"

namespace fs = std::filesystem;

namespace valimetrics {

namespace {

// Uniform in [0,1) straight from the engine bits so output does not depend on
// the standard library's distribution implementations.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(unit(rng) * (hi - lo + 1));
}

struct ConvLayer {
  std::uint32_t in = 0, out = 0;
  std::vector<float> w;  // out x in x 3 x 3
  std::vector<float> b;
};

ConvLayer make_layer(std::uint32_t in, std::uint32_t out, std::mt19937_64& rng) {
  ConvLayer l{in, out, {}, {}};
  const double scale = 1.0 / std::sqrt(9.0 * in);
  l.w.resize(static_cast<std::size_t>(out) * in * 9);
  for (auto& v : l.w) v = static_cast<float>((unit(rng) * 2.0 - 1.0) * scale * 1.7);
  l.b.resize(out);
  for (auto& v : l.b) v = static_cast<float>((unit(rng) * 2.0 - 1.0) * 0.1);
  return l;
}

// stride 2, zero padding 1, tanh
FeatureMap conv(const FeatureMap& x, const ConvLayer& l) {
  FeatureMap y(l.out, (x.height + 1) / 2, (x.width + 1) / 2);
  for (std::uint32_t o = 0; o < l.out; ++o) {
    for (std::uint32_t yy = 0; yy < y.height; ++yy) {
      for (std::uint32_t xx = 0; xx < y.width; ++xx) {
        double acc = l.b[o];
        for (std::uint32_t i = 0; i < l.in; ++i) {
          const float* k = &l.w[((static_cast<std::size_t>(o) * l.in + i) * 9)];
          for (int dy = -1; dy <= 1; ++dy) {
            const long sy = 2L * yy + dy;
            if (sy < 0 || sy >= static_cast<long>(x.height)) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const long sx = 2L * xx + dx;
              if (sx < 0 || sx >= static_cast<long>(x.width)) continue;
              acc += k[(dy + 1) * 3 + (dx + 1)] * x.at(i, static_cast<std::uint32_t>(sy), static_cast<std::uint32_t>(sx));
            }
          }
        }
        y.at(o, yy, xx) = static_cast<float>(std::tanh(acc));
      }
    }
  }
  return y;
}

const std::vector<ConvLayer>& demo_layers() {
  static const std::vector<ConvLayer> layers = [] {
    std::mt19937_64 rng(0x5eed0001);
    std::vector<ConvLayer> v;
    v.push_back(make_layer(3, 8, rng));
    v.push_back(make_layer(8, 16, rng));
    return v;
  }();
  return layers;
}

}  // namespace

FeatureStack demo_features(const Image8& image) {
  FeatureMap x(3, static_cast<std::uint32_t>(image.height), static_cast<std::uint32_t>(image.width));
  for (std::uint32_t c = 0; c < 3; ++c) {
    const int src = image.channels == 3 ? static_cast<int>(c) : 0;
    for (int yy = 0; yy < image.height; ++yy) {
      for (int xx = 0; xx < image.width; ++xx) {
        x.at(c, yy, xx) = static_cast<float>(image.at(xx, yy, src) / 127.5 - 1.0);
      }
    }
  }
  FeatureStack s;
  s.extractor_id = kDemoExtractorId;
  for (const auto& l : demo_layers()) {
    x = conv(x, l);
    s.layers.push_back(x);
  }
  return s;
}

DemoScene demo_scene(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DemoScene scene;
  scene.image = Image8(width, height, 3);
  scene.mask = ClassMask{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};

  double base[3], grad[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 60 + unit(rng) * 120;
    grad[c] = (unit(rng) * 2 - 1) * 60;
  }
  std::vector<double> px(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = (x + y) / static_cast<double>(width + height);
      for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * width + x) * 3 + c] = base[c] + grad[c] * t;
    }
  }

  const int margin = std::max(width, height) / 8;
  const int count = uniform_int(rng, 3, 5);
  for (int k = 0; k < count; ++k) {
    const int cls = uniform_int(rng, 1, 3);
    const int bw = uniform_int(rng, width / 8, width / 4);
    const int bh = uniform_int(rng, height / 8, height / 4);
    const int x0 = uniform_int(rng, margin, width - margin - bw);
    const int y0 = uniform_int(rng, margin, height - margin - bh);
    double color[3];
    for (double& c : color) c = 20 + unit(rng) * 215;
    const bool ellipse = cls == 2;
    for (int y = y0; y < y0 + bh; ++y) {
      for (int x = x0; x < x0 + bw; ++x) {
        if (ellipse) {
          const double dx = (x + 0.5 - x0 - bw / 2.0) / (bw / 2.0);
          const double dy = (y + 0.5 - y0 - bh / 2.0) / (bh / 2.0);
          if (dx * dx + dy * dy > 1.0) continue;
        }
        for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * width + x) * 3 + c] = color[c];
        scene.mask.classes[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(cls);
      }
    }
    Detection d;
    d.class_id = cls;
    d.bbox = {double(x0), double(y0), double(x0 + bw), double(y0 + bh)};
    d.score = 0.5 + 0.5 * unit(rng);
    scene.objects.push_back(d);
  }
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double noise = (unit(rng) - 0.5) * 12.0;
    scene.image.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i] + noise), 0L, 255L));
  }
  return scene;
}

DemoScene boxes_over(Image8 image, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int width = image.width, height = image.height;
  DemoScene scene;
  scene.image = std::move(image);
  scene.mask = ClassMask{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  const int margin = std::max(width, height) / 8;
  const int count = uniform_int(rng, 3, 5);
  for (int k = 0; k < count; ++k) {
    Detection d;
    d.class_id = uniform_int(rng, 1, 3);
    const int bw = uniform_int(rng, width / 8, width / 4);
    const int bh = uniform_int(rng, height / 8, height / 4);
    const int x0 = uniform_int(rng, margin, width - margin - bw);
    const int y0 = uniform_int(rng, margin, height - margin - bh);
    d.bbox = {double(x0), double(y0), double(x0 + bw), double(y0 + bh)};
    d.score = 0.5 + 0.5 * unit(rng);
    for (int y = y0; y < y0 + bh; ++y) {
      for (int x = x0; x < x0 + bw; ++x) {
        scene.mask.classes[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(d.class_id);
      }
    }
    scene.objects.push_back(d);
  }
  return scene;
}

namespace {

ClassMask shift_mask(const ClassMask& m, int dx, int dy) {
  ClassMask out{m.width, m.height, std::vector<std::uint8_t>(m.classes.size(), 0)};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const int sx = x - dx, sy = y - dy;
      if (sx < 0 || sy < 0 || sx >= m.width || sy >= m.height) continue;
      out.classes[static_cast<std::size_t>(y) * m.width + x] = m.classes[static_cast<std::size_t>(sy) * m.width + sx];
    }
  }
  return out;
}

nlohmann::json detection_json(const std::string& image_id, const Detection& d) {
  return {{"image_id", image_id},
          {"class_id", d.class_id},
          {"bbox", {d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max}},
          {"score", d.score}};
}

}  // namespace

DemoCorpus build_demo(const DemoOptions& o) {
  if (o.scenes < 1 || o.qualities.empty()) throw Error(Errc::ConfigError, "demo needs scenes and qualities");
  const fs::path root = o.out_dir;
  fs::create_directories(root / "images");

  struct Mod {
    std::string id;
    int quality;
    std::string tag;
    Image8 decoded;
    double mse;
  };
  std::vector<DemoScene> scenes;
  std::vector<std::string> ids;
  std::vector<Mod> mods;
  double max_mse = 0.0;
  std::mt19937_64 seeds(o.seed);
  std::vector<fs::path> sources;
  if (o.reference_dir) {
    sources = list_images(*o.reference_dir);
    if (sources.size() > static_cast<std::size_t>(o.scenes)) sources.resize(static_cast<std::size_t>(o.scenes));
    if (sources.empty()) throw Error(Errc::EmptyIntersection, "no reference images in " + o.reference_dir->string());
  }
  const int count = o.reference_dir ? static_cast<int>(sources.size()) : o.scenes;
  for (int i = 0; i < count; ++i) {
    const std::string id = o.reference_dir ? sources[static_cast<std::size_t>(i)].stem().string()
                                           : fmt::format("scene_{:03d}", i);
    scenes.push_back(o.reference_dir ? boxes_over(read_image(sources[static_cast<std::size_t>(i)]), seeds())
                                     : demo_scene(o.width, o.height, seeds()));
    ids.push_back(id);
    write_png(root / "images" / (id + ".png"), scenes.back().image);
    for (int q : o.qualities) {
      auto rt = jpeg_round_trip(scenes.back().image, q);
      const double e = mse(scenes.back().image, rt.decoded);
      max_mse = std::max(max_mse, e);
      mods.push_back({id, q, Modification::jpeg(q).tag(), std::move(rt.decoded), e});
    }
  }
  const double alpha = max_mse > 0 ? o.max_shift / max_mse : 0.0;

  // Features and weights.
  const fs::path fdir = root / "features";
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    save_feature_stack(fdir / "ref" / (ids[i] + ".vfts"), demo_features(scenes[i].image));
  }
  for (const auto& m : mods) {
    save_feature_stack(fdir / modification_dirname(m.tag) / (m.id + ".vfts"), demo_features(m.decoded));
  }
  save_lpips_weights(fdir / "weights.vftw", LpipsWeights::uniform(demo_features(scenes.front().image)));

  // Predictions: reference boxes are the shapes; modified boxes slide along a
  // random axis by alpha * mse of their size.
  using nlohmann::json;
  json ref_preds = json::array(), mod_preds = json::array();
  std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t mi = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const auto& d : scenes[i].objects) ref_preds.push_back(detection_json(ids[i], d));
    for (std::size_t q = 0; q < o.qualities.size(); ++q, ++mi) {
      const Mod& m = mods[mi];
      const double t = alpha * m.mse;
      for (const auto& d : scenes[i].objects) {
        Detection s = d;
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        if (unit(rng) < 0.5) {
          const double dx = sign * t * (d.bbox.x_max - d.bbox.x_min);
          s.bbox.x_min += dx;
          s.bbox.x_max += dx;
        } else {
          const double dy = sign * t * (d.bbox.y_max - d.bbox.y_min);
          s.bbox.y_min += dy;
          s.bbox.y_max += dy;
        }
        json j = detection_json(m.id, s);
        j["modification"] = m.tag;
        mod_preds.push_back(std::move(j));
      }
      // Masks shift by the same fraction of a typical object size.
      const int px = static_cast<int>(std::lround(t * scenes[i].image.width / 6.0));
      const ClassMask shifted = unit(rng) < 0.5 ? shift_mask(scenes[i].mask, px, 0) : shift_mask(scenes[i].mask, 0, px);
      save_mask(root / "masks" / "mod" / modification_dirname(m.tag) / (m.id + ".png"), shifted);
    }
    save_mask(root / "masks" / "ref" / (ids[i] + ".png"), scenes[i].mask);
  }
  const json ref_doc = {{"model_id", "demo-shapes"}, {"predictions", ref_preds}};
  const json mod_doc = {{"model_id", "demo-shapes"}, {"predictions", mod_preds}};
  write_text_file(root / "predictions" / "ref.json", ref_doc.dump(1) + "\n");
  write_text_file(root / "predictions" / "mod.json", mod_doc.dump(1) + "\n");

  std::string sweep;
  for (std::size_t q = 0; q < o.qualities.size(); ++q) sweep += (q ? ", " : "") + std::to_string(o.qualities[q]);
  const std::string toml = fmt::format(
      "# synthetic demo corpus, seed {}\n"
      "ref_dir = \"images\"\n"
      "jpeg_sweep = [{}]\n"
      "features_dir = \"features\"\n"
      "lpips_weights = \"features/weights.vftw\"\n"
      "det_ref_pred = \"predictions/ref.json\"\n"
      "det_mod_pred = \"predictions/mod.json\"\n"
      "model_id = \"demo-shapes\"\n"
      "seg_ref_masks = \"masks/ref\"\n"
      "seg_mod_masks = \"masks/mod\"\n"
      "method = \"pearson\"\n"
      "plots = true\n"
      "out_dir = \"out\"\n"
      "seed = {}\n",
      o.seed, sweep, o.seed);
  write_text_file(root / "run.toml", toml);
  return {root / "run.toml", mods.size()};
}

}  // namespace valimetrics
