#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "valimetrics/analysis.hpp"
#include "valimetrics/manifest.hpp"
#include "valimetrics/perceptual.hpp"
#include "valimetrics/perf.hpp"
#include "valimetrics/quality.hpp"

namespace valimetrics {

// Warnings collected while a stage runs. `partial` means some pair or
// metric was skipped and the run should exit with status 1.
struct StageNotes {
  std::vector<std::string> warnings;
  bool partial = false;

  void warn(std::string message);
  void merge(const StageNotes& other);
};

// "jpeg:90" -> "jpeg_90"; used for per-modification directories.
std::string modification_dirname(const std::string& tag);

struct QualityOptions {
  std::optional<std::filesystem::path> features_dir;
  std::optional<std::filesystem::path> lpips_weights;
  int fid_layer = -1;  // negative counts from the deepest layer
};

// Feature files live at <features_dir>/ref/<pair_id>.vfts and
// <features_dir>/<modification_dirname>/<pair_id>.vfts.
std::filesystem::path ref_feature_path(const std::filesystem::path& features_dir, const ImagePair& pair);
std::filesystem::path mod_feature_path(const std::filesystem::path& features_dir, const ImagePair& pair);

// All ten metrics for one decoded pair. Features are optional; without them
// lpips and fid stay absent and cosine falls back to the 32x32 luma vector.
QualityVector compute_quality(const std::string& pair_id, const std::string& modification,
                              const Image8& ref, const Image8& mod,
                              const FeatureStack* ref_features = nullptr,
                              const FeatureStack* mod_features = nullptr,
                              const LpipsWeights* weights = nullptr, int fid_layer = -1,
                              StageNotes* notes = nullptr);

std::vector<QualityVector> compute_quality_table(const Manifest& manifest, const QualityOptions& options,
                                                 int jobs, StageNotes& notes);

// With a manifest, one row per manifest pair (boxes clamped to the image);
// without, one row per (modification, image_id) found in either file.
std::vector<PerformanceDelta> compute_detection_table(const Manifest* manifest,
                                                      const PredictionFile& ref,
                                                      const PredictionFile& mod,
                                                      const DetectionOptions& options, double eps,
                                                      StageNotes& notes);

// Masks: <ref_dir>/<pair_id>.png and <mod_dir>/<modification_dirname>/<pair_id>.png,
// falling back to <mod_dir>/<pair_id>.png.
std::vector<PerformanceDelta> compute_segmentation_table(const Manifest& manifest,
                                                         const std::filesystem::path& ref_dir,
                                                         const std::filesystem::path& mod_dir, double eps,
                                                         int jobs, StageNotes& notes);
// Pairs mask files by stem, without a manifest.
std::vector<PerformanceDelta> compute_segmentation_from_dirs(const std::filesystem::path& ref_dir,
                                                             const std::filesystem::path& mod_dir,
                                                             const std::string& modification, double eps,
                                                             int jobs, StageNotes& notes);

struct CorrelateOptions {
  CorrelationMethod method = CorrelationMethod::Pearson;
  bool plots = false;
  bool per_modification = false;
};

// Pooled correlation matrix plus box statistics of every quality and
// performance metric, grouped by modification.
void correlate_tables(const std::vector<QualityVector>& quality, const std::vector<PerformanceDelta>& perf,
                      const std::filesystem::path& out_dir, const CorrelateOptions& options);

// Box statistics and plots only (no correlation).
void report_tables(const std::vector<QualityVector>& quality, const std::vector<PerformanceDelta>& perf,
                   const std::filesystem::path& out_dir, bool plots);

struct RunConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> ref_dir;
  std::optional<std::filesystem::path> mod_dir;
  std::string modification = "other:modified";
  std::vector<int> jpeg_sweep;
  std::optional<std::filesystem::path> features_dir;
  std::optional<std::filesystem::path> lpips_weights;
  int fid_layer = -1;
  std::optional<std::filesystem::path> det_ref_pred;
  std::optional<std::filesystem::path> det_mod_pred;
  std::string model_id = "default";
  double ref_min_score = 0.25;
  double iou_thresh = 0.5;
  std::optional<std::filesystem::path> seg_ref_masks;
  std::optional<std::filesystem::path> seg_mod_masks;
  double eps = 0.0;
  CorrelationMethod method = CorrelationMethod::Pearson;
  bool plots = false;
  bool per_modification = false;
  std::filesystem::path out_dir = "valimetrics-out";
  int jobs = 1;
  std::uint64_t seed = 0;
};

// Relative paths resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& toml_text, const std::filesystem::path& base_dir = {});
// Throws ConfigError describing the first problem.
void validate_run_config(const RunConfig& config);

struct StageOutcome {
  std::string name;
  bool skipped = false;  // up to date from a previous run
  StageNotes notes;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 1 partial, 2 fatal
  std::vector<StageOutcome> stages;
  std::string error;
};

// pair -> quality -> perf -> correlate. Stages whose inputs are unchanged
// since their last successful run are skipped. Writes run_report.json.
RunResult run_pipeline(const RunConfig& config);

}  // namespace valimetrics
