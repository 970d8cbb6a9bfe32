#include "valimetrics/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>
#include <toml.hpp>

#include "stage_cache.hpp"
#include "valimetrics/error.hpp"
#include "valimetrics/modification.hpp"
#include "valimetrics/parallel.hpp"
#include "valimetrics/tables.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace valimetrics {

void StageNotes::warn(std::string message) {
  spdlog::warn("{}", message);
  warnings.push_back(std::move(message));
  partial = true;
}

void StageNotes::merge(const StageNotes& other) {
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
  partial = partial || other.partial;
}

std::string modification_dirname(const std::string& tag) {
  std::string out = tag;
  for (char& c : out) {
    if (c == ':' || c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return out;
}

fs::path ref_feature_path(const fs::path& features_dir, const ImagePair& pair) {
  return features_dir / "ref" / (pair.pair_id() + ".vfts");
}

fs::path mod_feature_path(const fs::path& features_dir, const ImagePair& pair) {
  return features_dir / modification_dirname(pair.modification.tag()) / (pair.pair_id() + ".vfts");
}

namespace {

template <typename Fn>
std::optional<double> guarded(const char* metric, const std::string& pair_id, StageNotes* notes, Fn&& fn,
                              bool expected_absence = false) {
  try {
    return fn();
  } catch (const Error& e) {
    if (notes && !expected_absence) notes->warn(fmt::format("{}: {} absent ({})", pair_id, metric, e.what()));
    return std::nullopt;
  }
}

const FeatureMap& fid_map(const FeatureStack& stack, int layer) {
  const int n = static_cast<int>(stack.layers.size());
  const int idx = layer < 0 ? n + layer : layer;
  if (idx < 0 || idx >= n) throw Error(Errc::ShapeMismatch, fmt::format("no feature layer {}", layer));
  return stack.layers[static_cast<std::size_t>(idx)];
}

}  // namespace

QualityVector compute_quality(const std::string& pair_id, const std::string& modification,
                              const Image8& ref, const Image8& mod, const FeatureStack* ref_features,
                              const FeatureStack* mod_features, const LpipsWeights* weights, int fid_layer,
                              StageNotes* notes) {
  if (ref.width != mod.width || ref.height != mod.height || ref.channels != mod.channels) {
    throw Error(Errc::DimensionMismatch, pair_id + ": decoded images differ in shape");
  }
  QualityVector q;
  q.pair_id = pair_id;
  q.modification = modification;
  const GrayImage lr = to_luma(ref), lm = to_luma(mod);
  q.mse = mse(ref, mod);
  q.psnr = psnr_from_mse(*q.mse);
  q.ssim = guarded("ssim", pair_id, notes, [&] { return ssim(lr, lm); });
  // A constant image has no defined NCC; that is a property of the data.
  q.ncc = guarded("ncc", pair_id, notes, [&] { return ncc(lr, lm); }, true);
  q.mutual_info = mutual_information(lr, lm);
  q.emd = emd(lr, lm);
  q.entropy_ref = entropy(lr);
  q.entropy_mod = entropy(lm);
  q.entropy_delta = std::abs(*q.entropy_ref - *q.entropy_mod);

  if (ref_features && mod_features) {
    const LpipsWeights uniform = weights ? LpipsWeights{} : LpipsWeights::uniform(*ref_features);
    const LpipsWeights& w = weights ? *weights : uniform;
    q.lpips = guarded("lpips", pair_id, notes, [&] { return lpips(*ref_features, *mod_features, w); });
    q.fid = guarded("fid", pair_id, notes, [&] {
      if (ref_features->extractor_id != mod_features->extractor_id) {
        throw Error(Errc::ExtractorMismatch, "feature stacks come from different extractors");
      }
      return frechet_distance(gaussian_summary(fid_map(*ref_features, fid_layer)),
                              gaussian_summary(fid_map(*mod_features, fid_layer)));
    });
    q.cosine = guarded("cosine", pair_id, notes, [&] {
      return cosine_similarity(pooled_feature_vector(*ref_features), pooled_feature_vector(*mod_features));
    });
    q.cosine_mode = "features";
  } else {
    q.cosine = guarded("cosine", pair_id, notes,
                       [&] { return cosine_similarity(luma_vector(lr), luma_vector(lm)); });
    q.cosine_mode = "luma32";
  }
  return q;
}

std::vector<QualityVector> compute_quality_table(const Manifest& manifest, const QualityOptions& options,
                                                 int jobs, StageNotes& notes) {
  std::optional<LpipsWeights> weights;
  bool have_features = options.features_dir && fs::is_directory(*options.features_dir);
  if (!have_features) {
    notes.warn(options.features_dir
                   ? "feature directory " + options.features_dir->string() + " not found; lpips and fid absent"
                   : "no feature directory; lpips and fid absent, cosine uses the luma fallback");
  } else if (options.lpips_weights) {
    weights = load_lpips_weights(*options.lpips_weights);
  } else {
    notes.warn("no LPIPS weights given; using uniform channel weights");
  }

  std::vector<QualityVector> rows(manifest.pairs.size());
  std::vector<StageNotes> pair_notes(manifest.pairs.size());
  parallel_for(manifest.pairs.size(), jobs, [&](std::size_t i) {
    const ImagePair& pair = manifest.pairs[i];
    StageNotes& local = pair_notes[i];
    const Image8 ref = read_image(pair.ref.path);
    const Image8 mod = read_image(pair.mod.path);
    std::optional<FeatureStack> rf, mf;
    if (have_features) {
      const fs::path rp = ref_feature_path(*options.features_dir, pair);
      const fs::path mp = mod_feature_path(*options.features_dir, pair);
      if (fs::exists(rp) && fs::exists(mp)) {
        try {
          rf = load_feature_stack(rp);
          mf = load_feature_stack(mp);
        } catch (const Error& e) {
          local.warn(fmt::format("{}: unreadable features ({})", pair.pair_id(), e.what()));
          rf.reset();
          mf.reset();
        }
      } else {
        local.warn(fmt::format("{}: feature files missing ({} / {})", pair.pair_id(), rp.string(), mp.string()));
      }
    }
    rows[i] = compute_quality(pair.pair_id(), pair.modification.tag(), ref, mod, rf ? &*rf : nullptr,
                              mf ? &*mf : nullptr, weights ? &*weights : nullptr, options.fid_layer, &local);
  });
  for (const auto& n : pair_notes) notes.merge(n);
  return rows;
}

std::vector<PerformanceDelta> compute_detection_table(const Manifest* manifest, const PredictionFile& ref,
                                                      const PredictionFile& mod, const DetectionOptions& options,
                                                      double eps, StageNotes& notes) {
  std::vector<PerformanceDelta> rows;
  if (ref.model_id != mod.model_id) {
    throw Error(Errc::ModelMismatch, "'" + ref.model_id + "' vs '" + mod.model_id + "'");
  }
  if (manifest) {
    for (const auto& pair : manifest->pairs) {
      const std::string id = pair.pair_id();
      const std::string tag = pair.modification.tag();
      DetectionOptions o = options;
      o.image_size = std::make_pair(pair.ref.width, pair.ref.height);
      PerformanceDelta p = evaluate_detection(ref.lookup(id), mod.lookup(id, tag), o, eps);
      p.pair_id = id;
      p.modification = tag;
      rows.push_back(std::move(p));
    }
    return rows;
  }
  std::set<std::pair<std::string, std::string>> keys;  // (modification, image_id)
  std::set<std::string> covered;
  for (const auto& [key, set] : mod.sets) {
    keys.insert(key);
    covered.insert(key.second);
  }
  for (const auto& [key, set] : ref.sets) {
    if (!covered.contains(key.second)) keys.insert({"", key.second});
  }
  for (const auto& [tag, id] : keys) {
    PerformanceDelta p = evaluate_detection(ref.lookup(id), mod.lookup(id, tag), options, eps);
    p.pair_id = id;
    p.modification = tag;
    rows.push_back(std::move(p));
  }
  if (rows.empty()) notes.warn("prediction files contain no detections");
  return rows;
}

namespace {

std::optional<PerformanceDelta> segment_pair(const fs::path& ref_path, const fs::path& mod_path,
                                             const std::string& pair_id, const std::string& tag, double eps,
                                             std::optional<std::pair<int, int>> expected, StageNotes& notes) {
  if (!fs::exists(ref_path) || !fs::exists(mod_path)) {
    notes.warn(fmt::format("{} ({}): mask missing", pair_id, tag));
    return std::nullopt;
  }
  try {
    const ClassMask r = load_mask(ref_path);
    const ClassMask m = load_mask(mod_path);
    if (expected && (r.width != expected->first || r.height != expected->second)) {
      throw Error(Errc::DimensionMismatch, "mask does not match image size");
    }
    PerformanceDelta p = evaluate_segmentation(r, m, eps);
    p.pair_id = pair_id;
    p.modification = tag;
    return p;
  } catch (const Error& e) {
    notes.warn(fmt::format("{} ({}): segmentation skipped ({})", pair_id, tag, e.what()));
    return std::nullopt;
  }
}

std::string relative_stem(const fs::path& file, const fs::path& dir) {
  fs::path rel = fs::relative(file, dir);
  rel.replace_extension();
  return rel.generic_string();
}

}  // namespace

std::vector<PerformanceDelta> compute_segmentation_table(const Manifest& manifest, const fs::path& ref_dir,
                                                         const fs::path& mod_dir, double eps, int jobs,
                                                         StageNotes& notes) {
  std::vector<std::optional<PerformanceDelta>> slots(manifest.pairs.size());
  std::vector<StageNotes> pair_notes(manifest.pairs.size());
  parallel_for(manifest.pairs.size(), jobs, [&](std::size_t i) {
    const ImagePair& pair = manifest.pairs[i];
    const std::string id = pair.pair_id();
    const std::string tag = pair.modification.tag();
    fs::path mod_path = mod_dir / modification_dirname(tag) / (id + ".png");
    if (!fs::exists(mod_path)) mod_path = mod_dir / (id + ".png");
    slots[i] = segment_pair(ref_dir / (id + ".png"), mod_path, id, tag, eps,
                            std::make_pair(pair.ref.width, pair.ref.height), pair_notes[i]);
  });
  std::vector<PerformanceDelta> rows;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    notes.merge(pair_notes[i]);
    if (slots[i]) rows.push_back(std::move(*slots[i]));
  }
  return rows;
}

std::vector<PerformanceDelta> compute_segmentation_from_dirs(const fs::path& ref_dir, const fs::path& mod_dir,
                                                             const std::string& modification, double eps,
                                                             int jobs, StageNotes& notes) {
  std::map<std::string, fs::path> refs, mods;
  for (const auto& p : list_images(ref_dir)) refs.emplace(relative_stem(p, ref_dir), p);
  for (const auto& p : list_images(mod_dir)) mods.emplace(relative_stem(p, mod_dir), p);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  std::vector<std::string> ids;
  for (const auto& [id, path] : refs) {
    if (auto it = mods.find(id); it != mods.end()) {
      pairs.emplace_back(path, it->second);
      ids.push_back(id);
    } else {
      notes.warn(id + ": no modified mask");
    }
  }
  for (const auto& [id, path] : mods) {
    if (!refs.contains(id)) notes.warn(id + ": no reference mask");
  }
  if (pairs.empty()) throw Error(Errc::EmptyIntersection, "no mask pairs");
  std::vector<std::optional<PerformanceDelta>> slots(pairs.size());
  std::vector<StageNotes> pair_notes(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    slots[i] = segment_pair(pairs[i].first, pairs[i].second, ids[i], modification, eps, std::nullopt,
                            pair_notes[i]);
  });
  std::vector<PerformanceDelta> rows;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    notes.merge(pair_notes[i]);
    if (slots[i]) rows.push_back(std::move(*slots[i]));
  }
  return rows;
}

namespace {

std::vector<BoxStats> all_box_stats(const std::vector<QualityVector>& quality,
                                    const std::vector<PerformanceDelta>& perf) {
  const auto groups = modification_lookup(quality, perf);
  std::vector<BoxStats> stats;
  auto add = [&](const std::vector<MetricSeries>& series) {
    for (const auto& s : series) {
      auto b = boxplot_stats(s, groups);
      stats.insert(stats.end(), b.begin(), b.end());
    }
  };
  add(quality_series(quality));
  add(perf_series(perf));
  return stats;
}

ReportOptions report_options(bool plots) {
  ReportOptions o;
  o.plots = plots;
  o.row_groups = {{"Object detection vs. image quality", "det."},
                  {"Semantic segmentation vs. image quality", "seg."}};
  return o;
}

}  // namespace

void correlate_tables(const std::vector<QualityVector>& quality, const std::vector<PerformanceDelta>& perf,
                      const fs::path& out_dir, const CorrelateOptions& options) {
  const auto qs = quality_series(quality);
  const auto ps = perf_series(perf);
  const CorrelationMatrix corr = correlation_matrix(qs, ps, options.method);
  emit_report(corr, all_box_stats(quality, perf), out_dir, report_options(options.plots));
  if (!options.per_modification) return;
  std::set<std::string> tags;
  for (const auto& q : quality) tags.insert(q.modification);
  for (const auto& tag : tags) {
    std::vector<QualityVector> qsub;
    std::vector<PerformanceDelta> psub;
    std::copy_if(quality.begin(), quality.end(), std::back_inserter(qsub),
                 [&](const auto& q) { return q.modification == tag; });
    std::copy_if(perf.begin(), perf.end(), std::back_inserter(psub),
                 [&](const auto& p) { return p.modification == tag; });
    const auto sub = correlation_matrix(quality_series(qsub), perf_series(psub), options.method);
    const std::string name = modification_dirname(tag);
    write_text_file(out_dir / ("correlation_" + name + ".csv"), correlation_csv(sub));
    write_text_file(out_dir / ("correlation_" + name + ".md"), correlation_markdown(sub, report_options(false)));
  }
}

void report_tables(const std::vector<QualityVector>& quality, const std::vector<PerformanceDelta>& perf,
                   const fs::path& out_dir, bool plots) {
  emit_report(CorrelationMatrix{}, all_box_stats(quality, perf), out_dir, report_options(plots));
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? (base / p).lexically_normal() : p;
}

}  // namespace

RunConfig parse_run_config(const std::string& toml_text, const fs::path& base_dir) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(Errc::ConfigError, fmt::format("TOML: {} (line {})", e.description(), e.source().begin.line));
  }
  RunConfig c;
  auto path_opt = [&](const char* key, std::optional<fs::path>& dst) {
    if (auto v = tbl[key].value<std::string>()) dst = resolve(base_dir, *v);
  };
  static const std::set<std::string> known = {
      "manifest", "ref_dir", "mod_dir", "modification", "jpeg_sweep", "features_dir", "lpips_weights",
      "fid_layer", "det_ref_pred", "det_mod_pred", "model_id", "ref_min_score", "iou_thresh",
      "seg_ref_masks", "seg_mod_masks", "eps", "method", "plots", "per_modification", "out_dir",
      "jobs", "seed"};
  for (const auto& [key, node] : tbl) {
    if (!known.contains(std::string(key.str()))) {
      throw Error(Errc::ConfigError, "unknown config key '" + std::string(key.str()) + "'");
    }
  }
  auto typed = [&](const char* key, auto& dst) {
    using T = std::decay_t<decltype(dst)>;
    if (!tbl.contains(key)) return;
    if constexpr (std::is_same_v<T, double>) {
      auto v = tbl[key].value<double>();
      if (!v) throw Error(Errc::ConfigError, std::string("'") + key + "' must be a number");
      dst = *v;
    } else {
      auto v = tbl[key].value<T>();
      if (!v) throw Error(Errc::ConfigError, std::string("'") + key + "' has the wrong type");
      dst = *v;
    }
  };
  path_opt("manifest", c.manifest);
  path_opt("ref_dir", c.ref_dir);
  path_opt("mod_dir", c.mod_dir);
  path_opt("features_dir", c.features_dir);
  path_opt("lpips_weights", c.lpips_weights);
  path_opt("det_ref_pred", c.det_ref_pred);
  path_opt("det_mod_pred", c.det_mod_pred);
  path_opt("seg_ref_masks", c.seg_ref_masks);
  path_opt("seg_mod_masks", c.seg_mod_masks);
  if (auto v = tbl["out_dir"].value<std::string>()) c.out_dir = resolve(base_dir, *v);
  typed("modification", c.modification);
  typed("model_id", c.model_id);
  typed("fid_layer", c.fid_layer);
  typed("ref_min_score", c.ref_min_score);
  typed("iou_thresh", c.iou_thresh);
  typed("eps", c.eps);
  typed("plots", c.plots);
  typed("per_modification", c.per_modification);
  typed("jobs", c.jobs);
  std::int64_t seed = 0;
  typed("seed", seed);
  c.seed = static_cast<std::uint64_t>(seed);
  if (tbl.contains("method")) {
    std::string m;
    typed("method", m);
    c.method = parse_correlation_method(m);
  }
  if (tbl.contains("jpeg_sweep")) {
    const auto* arr = tbl["jpeg_sweep"].as_array();
    if (!arr) throw Error(Errc::ConfigError, "'jpeg_sweep' must be an array of integers");
    for (const auto& q : *arr) {
      auto v = q.value<int>();
      if (!v) throw Error(Errc::ConfigError, "'jpeg_sweep' must be an array of integers");
      c.jpeg_sweep.push_back(*v);
    }
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return parse_run_config(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

void validate_run_config(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, m); };
  if (!(c.eps >= 0.0 && c.eps <= 1.0)) fail("eps must be in [0,1]");
  if (c.jobs < 1) fail("jobs must be >= 1");
  if (!(c.ref_min_score >= 0.0 && c.ref_min_score <= 1.0)) fail("ref_min_score must be in [0,1]");
  if (!(c.iou_thresh > 0.0 && c.iou_thresh <= 1.0)) fail("iou_thresh must be in (0,1]");
  for (int q : c.jpeg_sweep) {
    if (q < 1 || q > 100) fail(fmt::format("jpeg quality {} outside [1,100]", q));
  }
  try {
    Modification::parse(c.modification);
  } catch (const Error& e) {
    fail(e.what());
  }
  if (!c.manifest) {
    if (!c.ref_dir) fail("need either 'manifest' or 'ref_dir'");
    if (!c.mod_dir && c.jpeg_sweep.empty()) fail("need 'mod_dir' or 'jpeg_sweep' next to 'ref_dir'");
  }
  auto must_exist = [&](const std::optional<fs::path>& p, const char* key) {
    if (p && !fs::exists(*p)) fail(fmt::format("{} '{}' does not exist", key, p->string()));
  };
  must_exist(c.manifest, "manifest");
  must_exist(c.ref_dir, "ref_dir");
  must_exist(c.mod_dir, "mod_dir");
  must_exist(c.lpips_weights, "lpips_weights");
  must_exist(c.det_ref_pred, "det_ref_pred");
  must_exist(c.det_mod_pred, "det_mod_pred");
  must_exist(c.seg_ref_masks, "seg_ref_masks");
  must_exist(c.seg_mod_masks, "seg_mod_masks");
  if (c.det_ref_pred.has_value() != c.det_mod_pred.has_value()) {
    fail("det_ref_pred and det_mod_pred go together");
  }
  if (c.seg_ref_masks.has_value() != c.seg_mod_masks.has_value()) {
    fail("seg_ref_masks and seg_mod_masks go together");
  }
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

json notes_to_json(const StageNotes& n) { return {{"partial", n.partial}, {"warnings", n.warnings}}; }

StageNotes notes_from_json(const json& j) {
  StageNotes n;
  n.partial = j.value("partial", false);
  n.warnings = j.value("warnings", std::vector<std::string>{});
  return n;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string opt_str(const std::optional<fs::path>& p) { return p ? p->string() : "-"; }

class Runner {
public:
  explicit Runner(const RunConfig& c) : c_(c), cache_(c.out_dir) {}

  RunResult run() {
    RunResult result;
    try {
      stage_pair(result);
      const Manifest manifest = load_manifest(manifest_path_);
      stage_quality(result, manifest);
      const bool have_perf = stage_perf(result, manifest);
      stage_correlate(result, have_perf);
    } catch (const std::exception& e) {
      result.error = e.what();
      result.exit_code = 2;
      spdlog::error("{}", e.what());
    }
    if (result.exit_code != 2) {
      const bool partial = std::any_of(result.stages.begin(), result.stages.end(),
                                       [](const StageOutcome& s) { return s.notes.partial; });
      result.exit_code = partial ? 1 : 0;
    }
    write_report(result);
    return result;
  }

private:
  template <typename Fn>
  void stage(RunResult& result, const std::string& name, const std::vector<fs::path>& inputs,
             const std::string& params, const std::vector<fs::path>& outputs, Fn&& body) {
    StageOutcome outcome;
    outcome.name = name;
    json extra;
    if (cache_.up_to_date(name, inputs, params, outputs, &extra)) {
      spdlog::info("stage {}: up to date", name);
      outcome.skipped = true;
      outcome.notes = notes_from_json(extra);
    } else {
      spdlog::info("stage {}: running", name);
      body(outcome.notes);
      cache_.record(name, inputs, params, outputs, notes_to_json(outcome.notes));
    }
    result.stages.push_back(std::move(outcome));
  }

  void stage_pair(RunResult& result) {
    if (c_.manifest) {
      manifest_path_ = *c_.manifest;
      return;
    }
    manifest_path_ = c_.out_dir / "manifest.json";
    const auto ref_images = list_images(*c_.ref_dir);
    std::vector<std::pair<fs::path, Modification>> targets;
    if (!c_.jpeg_sweep.empty()) {
      const fs::path stats_path = c_.out_dir / "stats.csv";
      std::vector<fs::path> outputs{stats_path};
      for (int q : c_.jpeg_sweep) {
        const fs::path dir = c_.out_dir / "modified" / modification_dirname(Modification::jpeg(q).tag());
        targets.emplace_back(dir, Modification::jpeg(q));
        for (const auto& img : ref_images) {
          outputs.push_back((dir / fs::relative(img.parent_path(), *c_.ref_dir) /
                             (img.stem().string() + ".jpg")).lexically_normal());
        }
      }
      stage(result, "modify", ref_images, fmt::format("jpeg|{}", fmt::join(c_.jpeg_sweep, ",")), outputs,
            [&](StageNotes&) {
              std::vector<CompressionStats> stats;
              for (const auto& [dir, m] : targets) {
                std::vector<double> factors;
                jpeg_directory(*c_.ref_dir, dir, m.quality, c_.jobs, &factors);
                stats.push_back(summarize_factors(m.quality, factors));
              }
              write_text_file(stats_path, compression_stats_csv(stats));
            });
    } else {
      targets.emplace_back(*c_.mod_dir, Modification::parse(c_.modification));
    }
    std::vector<fs::path> inputs = ref_images;
    std::string params = "pair";
    for (const auto& [dir, m] : targets) {
      const auto imgs = list_images(dir);
      inputs.insert(inputs.end(), imgs.begin(), imgs.end());
      params += "|" + dir.string() + "=" + m.tag();
    }
    stage(result, "pair", inputs, params, {manifest_path_}, [&](StageNotes& notes) {
      std::vector<Manifest> parts;
      for (const auto& [dir, m] : targets) {
        PairingOptions o;
        o.jobs = c_.jobs;
        PairingResult r = pair_by_stem(*c_.ref_dir, dir, m, o);
        for (const auto& s : r.report.unmatched_ref) notes.warn(m.tag() + ": unmatched reference " + s);
        for (const auto& s : r.report.unmatched_mod) notes.warn(m.tag() + ": unmatched modified " + s);
        for (const auto& s : r.report.decode_errors) notes.warn(m.tag() + ": " + s);
        for (const auto& s : r.report.duplicates) notes.warn(m.tag() + ": duplicate stem " + s);
        for (const auto& [id, v] : r.report.excluded) {
          notes.warn(fmt::format("{}: excluded {} ({})", m.tag(), id, fmt::join(v.messages, "; ")));
        }
        parts.push_back(std::move(r.manifest));
      }
      save_manifest(manifest_path_, merge_manifests(std::move(parts)));
    });
  }

  void stage_quality(RunResult& result, const Manifest& manifest) {
    const fs::path out = c_.out_dir / "quality.csv";
    std::vector<fs::path> inputs{manifest_path_};
    for (const auto& p : manifest.pairs) {
      inputs.push_back(p.ref.path);
      inputs.push_back(p.mod.path);
    }
    if (c_.features_dir) {
      for (const auto& p : manifest.pairs) {
        for (const auto& f : {ref_feature_path(*c_.features_dir, p), mod_feature_path(*c_.features_dir, p)}) {
          if (fs::exists(f)) inputs.push_back(f);
        }
      }
    }
    if (c_.lpips_weights) inputs.push_back(*c_.lpips_weights);
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    const std::string params =
        fmt::format("quality|{}|{}|{}", opt_str(c_.features_dir), opt_str(c_.lpips_weights), c_.fid_layer);
    stage(result, "quality", inputs, params, {out}, [&](StageNotes& notes) {
      QualityOptions o{c_.features_dir, c_.lpips_weights, c_.fid_layer};
      write_text_file(out, quality_csv(compute_quality_table(manifest, o, c_.jobs, notes)));
    });
  }

  bool stage_perf(RunResult& result, const Manifest& manifest) {
    perf_path_ = c_.out_dir / "perf.csv";
    if (!c_.det_ref_pred && !c_.seg_ref_masks) {
      StageOutcome o;
      o.name = "perf";
      o.notes.warn("no predictions or masks configured; performance and correlation stages skipped");
      result.stages.push_back(std::move(o));
      return false;
    }
    std::vector<fs::path> inputs{manifest_path_};
    if (c_.det_ref_pred) {
      inputs.push_back(*c_.det_ref_pred);
      inputs.push_back(*c_.det_mod_pred);
    }
    if (c_.seg_ref_masks) {
      for (const auto& dir : {*c_.seg_ref_masks, *c_.seg_mod_masks}) {
        const auto files = files_under(dir);
        inputs.insert(inputs.end(), files.begin(), files.end());
      }
    }
    const std::string params =
        fmt::format("perf|{}|{}|{}|{}|{}|{}|{}|{}|{}", opt_str(c_.det_ref_pred), opt_str(c_.det_mod_pred),
                    opt_str(c_.seg_ref_masks), opt_str(c_.seg_mod_masks), c_.model_id, c_.ref_min_score,
                    c_.iou_thresh, c_.eps, manifest.pairs.size());
    stage(result, "perf", inputs, params, {perf_path_}, [&](StageNotes& notes) {
      std::vector<PerformanceDelta> rows;
      if (c_.det_ref_pred) {
        const PredictionFile ref = load_predictions(*c_.det_ref_pred, c_.model_id);
        const PredictionFile mod = load_predictions(*c_.det_mod_pred, c_.model_id);
        DetectionOptions o;
        o.ref_min_score = c_.ref_min_score;
        o.iou_thresh = c_.iou_thresh;
        rows = compute_detection_table(&manifest, ref, mod, o, c_.eps, notes);
      }
      if (c_.seg_ref_masks) {
        auto seg = compute_segmentation_table(manifest, *c_.seg_ref_masks, *c_.seg_mod_masks, c_.eps, c_.jobs, notes);
        rows.insert(rows.end(), seg.begin(), seg.end());
      }
      write_text_file(perf_path_, perf_csv(rows));
    });
    return true;
  }

  void stage_correlate(RunResult& result, bool have_perf) {
    if (!have_perf) return;
    const fs::path dir = c_.out_dir / "reports";
    const fs::path quality = c_.out_dir / "quality.csv";
    const std::vector<fs::path> outputs{dir / "boxstats.json", dir / "correlation.csv", dir / "correlation.md"};
    const std::string params =
        fmt::format("correlate|{}|{}|{}", to_string(c_.method), c_.plots, c_.per_modification);
    stage(result, "correlate", {quality, perf_path_}, params, outputs, [&](StageNotes& notes) {
      const auto q = parse_quality_csv(std::string(read_text(quality)));
      const auto p = parse_perf_csv(std::string(read_text(perf_path_)));
      CorrelateOptions o{c_.method, c_.plots, c_.per_modification};
      correlate_tables(q, p, dir, o);
      (void)notes;
    });
  }

  static std::string read_text(const fs::path& p) {
    const auto b = read_file(p);
    return {b.begin(), b.end()};
  }

  void write_report(const RunResult& result) const {
    json stages = json::array();
    for (const auto& s : result.stages) {
      stages.push_back({{"name", s.name}, {"skipped", s.skipped}, {"partial", s.notes.partial},
                        {"warnings", s.notes.warnings}});
    }
    json doc = {{"exit_code", result.exit_code}, {"stages", stages}, {"error", result.error},
                {"tool_version", kToolVersion}};
    try {
      write_text_file(c_.out_dir / "run_report.json", doc.dump(2) + "\n");
    } catch (const std::exception& e) {
      spdlog::error("cannot write run report: {}", e.what());
    }
  }

  const RunConfig& c_;
  StageCache cache_;
  fs::path manifest_path_;
  fs::path perf_path_;
};

}  // namespace

RunResult run_pipeline(const RunConfig& config) {
  try {
    validate_run_config(config);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    RunResult r;
    r.exit_code = 2;
    r.error = e.what();
    return r;
  }
  fs::create_directories(config.out_dir);
  return Runner(config).run();
}

}  // namespace valimetrics
