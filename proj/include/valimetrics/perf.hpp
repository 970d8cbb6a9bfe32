#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace valimetrics {

struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double area() const { return (x_max - x_min) * (y_max - y_min); }
};

struct Detection {
  int class_id = 0;
  BBox bbox;
  double score = 1.0;
};

struct PredictionSet {
  std::string image_id;
  std::string model_id;
  std::vector<Detection> detections;

  // Clamps boxes to [0,width]x[0,height] and drops boxes that collapse.
  PredictionSet clamped(int width, int height) const;
  PredictionSet filtered(double min_score) const;
};

// Per-pixel class indices; 255 marks pixels to ignore.
struct ClassMask {
  static constexpr std::uint8_t kIgnore = 255;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> classes;
};

double iou(const BBox& a, const BBox& b);

struct Match {
  std::size_t ref_idx;
  std::size_t mod_idx;
  double iou;
};

struct MatchResult {
  std::vector<Match> matches;
  std::vector<std::size_t> unmatched_ref;
  std::vector<std::size_t> unmatched_mod;
};

// Order in which modified-image detections claim reference boxes:
// descending score, then larger area, then input order.
std::vector<std::size_t> claim_order(const std::vector<Detection>& dets);

// Class-aware greedy matching; each mod detection (in claim order) takes the
// unmatched same-class ref box with the highest IoU if it reaches the threshold.
MatchResult match_greedy(const PredictionSet& ref, const PredictionSet& mod, double iou_thresh);

double f1(const PredictionSet& ref, const PredictionSet& mod, double iou_thresh = 0.5);
// Sum of matched IoU over max(|ref|, |mod|).
double mean_iou_det(const PredictionSet& ref, const PredictionSet& mod, double iou_thresh = 0.5);
// Mean IoU over matched pairs only; absent without matches.
std::optional<double> mean_iou_matched(const PredictionSet& ref, const PredictionSet& mod,
                                       double iou_thresh = 0.5);

inline constexpr double kSmallArea = 32.0 * 32.0;

// 101-point interpolated AP of one class. Ref boxes flagged in `ignored`
// neither count as ground truth nor turn their matches into false positives.
double average_precision_class(const PredictionSet& ref, const PredictionSet& mod, int class_id,
                               double iou_thresh, const std::vector<bool>& ignored = {});
// Mean over classes present in ref.
std::optional<double> average_precision(const PredictionSet& ref, const PredictionSet& mod,
                                        double iou_thresh);
// Mean over classes present in ref and thresholds 0.50:0.05:0.95.
std::optional<double> map(const PredictionSet& ref, const PredictionSet& mod);
// map restricted to ref boxes with area < 32^2; absent when there are none.
std::optional<double> map_small(const PredictionSet& ref, const PredictionSet& mod);

struct SegMetrics {
  double mean_dice = 0.0;
  double mean_iou = 0.0;
  double mean_pixel_acc = 0.0;
  double pixel_acc = 0.0;  // global accuracy, auxiliary
  std::map<int, double> dice, iou;
};

SegMetrics seg_metrics(const ClassMask& ref, const ClassMask& mod);

enum class Task { Detection, Segmentation };
std::string to_string(Task task);

struct PerformanceDelta {
  std::string pair_id;
  std::string modification;
  Task task = Task::Detection;
  // detection
  std::optional<double> f1, mean_iou, map, map_small, mean_iou_matched;
  // segmentation (mean_iou shared)
  std::optional<double> mean_dice, mean_pixel_acc, pixel_acc;
  bool valid = false;
  double valid_eps = 0.0;

  // The agreement scores taking part in the validity check.
  std::vector<double> agreement_values() const;
};

// True iff every present agreement metric is >= 1 - eps.
bool is_valid(const PerformanceDelta& perf, double eps);

struct DetectionOptions {
  double ref_min_score = 0.25;
  double iou_thresh = 0.5;
  std::optional<std::pair<int, int>> image_size;  // clamp boxes when known
};

// Pseudo-ground-truth = ref filtered at ref_min_score. F1 and mean IoU also
// filter mod at the same cutoff; AP ranks all mod detections.
PerformanceDelta evaluate_detection(const PredictionSet& ref, const PredictionSet& mod,
                                    const DetectionOptions& options, double eps);
PerformanceDelta evaluate_segmentation(const ClassMask& ref, const ClassMask& mod, double eps);

// Predictions file: JSON array of {image_id, class_id, bbox, score}, or an
// object {"model_id": ..., "predictions": [...]}. Entries may carry an
// optional "modification" tag.
struct PredictionFile {
  std::string model_id;
  // (modification tag or "", image_id) -> set
  std::map<std::pair<std::string, std::string>, PredictionSet> sets;

  // Entries without a modification tag apply to every modification.
  PredictionSet lookup(const std::string& image_id, const std::string& modification = "") const;
};

PredictionFile load_predictions(const std::filesystem::path& path,
                                const std::string& default_model_id = "default");
PredictionFile parse_predictions(const std::string& text,
                                 const std::string& default_model_id = "default");

ClassMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const ClassMask& mask);

}  // namespace valimetrics
