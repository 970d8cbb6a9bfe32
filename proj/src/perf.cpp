#include "valimetrics/perf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "valimetrics/error.hpp"
#include "valimetrics/image.hpp"

using nlohmann::json;

namespace valimetrics {

namespace {

void require_same_model(const PredictionSet& ref, const PredictionSet& mod) {
  if (ref.model_id != mod.model_id) {
    throw Error(Errc::ModelMismatch, "'" + ref.model_id + "' vs '" + mod.model_id + "'");
  }
}

constexpr int kRecallPoints = 101;

double interpolated_ap(const std::vector<bool>& is_tp, std::size_t positives) {
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (bool hit : is_tp) {
    hit ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (int k = 0; k < kRecallPoints; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

std::optional<double> mean_ap(const PredictionSet& ref, const PredictionSet& mod,
                              const std::vector<bool>& ignored) {
  std::set<int> classes;
  for (std::size_t i = 0; i < ref.detections.size(); ++i) {
    if (!ignored[i]) classes.insert(ref.detections[i].class_id);
  }
  if (classes.empty()) return std::nullopt;
  double sum = 0.0;
  int cells = 0;
  for (int c : classes) {
    for (int t = 0; t < 10; ++t) {
      sum += average_precision_class(ref, mod, c, 0.5 + 0.05 * t, ignored);
      ++cells;
    }
  }
  return sum / cells;
}

}  // namespace

PredictionSet PredictionSet::clamped(int width, int height) const {
  PredictionSet out{image_id, model_id, {}};
  for (Detection d : detections) {
    d.bbox.x_min = std::clamp(d.bbox.x_min, 0.0, static_cast<double>(width));
    d.bbox.x_max = std::clamp(d.bbox.x_max, 0.0, static_cast<double>(width));
    d.bbox.y_min = std::clamp(d.bbox.y_min, 0.0, static_cast<double>(height));
    d.bbox.y_max = std::clamp(d.bbox.y_max, 0.0, static_cast<double>(height));
    if (d.bbox.x_max > d.bbox.x_min && d.bbox.y_max > d.bbox.y_min) out.detections.push_back(d);
  }
  return out;
}

PredictionSet PredictionSet::filtered(double min_score) const {
  PredictionSet out{image_id, model_id, {}};
  std::copy_if(detections.begin(), detections.end(), std::back_inserter(out.detections),
               [&](const Detection& d) { return d.score >= min_score; });
  return out;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<std::size_t> claim_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].bbox.area() > dets[b].bbox.area();
  });
  return order;
}

MatchResult match_greedy(const PredictionSet& ref, const PredictionSet& mod, double iou_thresh) {
  require_same_model(ref, mod);
  MatchResult result;
  std::vector<bool> taken(ref.detections.size(), false);
  for (std::size_t m : claim_order(mod.detections)) {
    const Detection& d = mod.detections[m];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t r = 0; r < ref.detections.size(); ++r) {
      if (taken[r] || ref.detections[r].class_id != d.class_id) continue;
      const double v = iou(ref.detections[r].bbox, d.bbox);
      if (v >= iou_thresh && v > best_iou) {
        best = r;
        best_iou = v;
      }
    }
    if (best) {
      taken[*best] = true;
      result.matches.push_back({*best, m, best_iou});
    } else {
      result.unmatched_mod.push_back(m);
    }
  }
  std::sort(result.unmatched_mod.begin(), result.unmatched_mod.end());
  for (std::size_t r = 0; r < taken.size(); ++r) {
    if (!taken[r]) result.unmatched_ref.push_back(r);
  }
  return result;
}

double f1(const PredictionSet& ref, const PredictionSet& mod, double iou_thresh) {
  const MatchResult m = match_greedy(ref, mod, iou_thresh);
  const auto tp = static_cast<double>(m.matches.size());
  const auto fp = static_cast<double>(m.unmatched_mod.size());
  const auto fn = static_cast<double>(m.unmatched_ref.size());
  if (tp + fp + fn == 0.0) return 1.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

double mean_iou_det(const PredictionSet& ref, const PredictionSet& mod, double iou_thresh) {
  const MatchResult m = match_greedy(ref, mod, iou_thresh);
  const std::size_t denom = std::max(ref.detections.size(), mod.detections.size());
  if (denom == 0) return 1.0;
  double sum = 0.0;
  for (const auto& match : m.matches) sum += match.iou;
  return sum / static_cast<double>(denom);
}

std::optional<double> mean_iou_matched(const PredictionSet& ref, const PredictionSet& mod,
                                       double iou_thresh) {
  const MatchResult m = match_greedy(ref, mod, iou_thresh);
  if (m.matches.empty()) {
    if (ref.detections.empty() && mod.detections.empty()) return 1.0;
    return std::nullopt;
  }
  double sum = 0.0;
  for (const auto& match : m.matches) sum += match.iou;
  return sum / static_cast<double>(m.matches.size());
}

double average_precision_class(const PredictionSet& ref, const PredictionSet& mod, int class_id,
                               double iou_thresh, const std::vector<bool>& ignored) {
  require_same_model(ref, mod);
  auto is_ignored = [&](std::size_t r) { return !ignored.empty() && ignored[r]; };
  std::size_t positives = 0;
  for (std::size_t r = 0; r < ref.detections.size(); ++r) {
    if (ref.detections[r].class_id == class_id && !is_ignored(r)) ++positives;
  }
  if (positives == 0) return 0.0;

  std::vector<bool> taken(ref.detections.size(), false);
  std::vector<bool> is_tp;
  for (std::size_t m : claim_order(mod.detections)) {
    const Detection& d = mod.detections[m];
    if (d.class_id != class_id) continue;
    // Prefer counted ground truth; fall back to ignored boxes.
    std::optional<std::size_t> best;
    for (bool want_ignored : {false, true}) {
      double best_iou = -1.0;
      for (std::size_t r = 0; r < ref.detections.size(); ++r) {
        if (taken[r] || ref.detections[r].class_id != class_id || is_ignored(r) != want_ignored) continue;
        const double v = iou(ref.detections[r].bbox, d.bbox);
        if (v >= iou_thresh && v > best_iou) {
          best = r;
          best_iou = v;
        }
      }
      if (best) break;
    }
    if (best) {
      taken[*best] = true;
      if (is_ignored(*best)) continue;
      is_tp.push_back(true);
    } else {
      is_tp.push_back(false);
    }
  }
  return interpolated_ap(is_tp, positives);
}

std::optional<double> average_precision(const PredictionSet& ref, const PredictionSet& mod,
                                        double iou_thresh) {
  require_same_model(ref, mod);
  std::set<int> classes;
  for (const auto& d : ref.detections) classes.insert(d.class_id);
  if (classes.empty()) return std::nullopt;
  double sum = 0.0;
  for (int c : classes) sum += average_precision_class(ref, mod, c, iou_thresh);
  return sum / static_cast<double>(classes.size());
}

std::optional<double> map(const PredictionSet& ref, const PredictionSet& mod) {
  require_same_model(ref, mod);
  if (ref.detections.empty()) return mod.detections.empty() ? 1.0 : 0.0;
  return mean_ap(ref, mod, std::vector<bool>(ref.detections.size(), false));
}

std::optional<double> map_small(const PredictionSet& ref, const PredictionSet& mod) {
  require_same_model(ref, mod);
  std::vector<bool> ignored(ref.detections.size());
  for (std::size_t r = 0; r < ref.detections.size(); ++r) {
    ignored[r] = !(ref.detections[r].bbox.area() < kSmallArea);
  }
  return mean_ap(ref, mod, ignored);
}

SegMetrics seg_metrics(const ClassMask& ref, const ClassMask& mod) {
  if (ref.width != mod.width || ref.height != mod.height ||
      ref.classes.size() != mod.classes.size()) {
    throw Error(Errc::DimensionMismatch, "mask sizes differ");
  }
  std::map<int, std::size_t> ref_count, mod_count, inter;
  std::size_t counted = 0, agree = 0;
  for (std::size_t i = 0; i < ref.classes.size(); ++i) {
    const int r = ref.classes[i];
    if (r == ClassMask::kIgnore) continue;
    const int m = mod.classes[i];
    ++counted;
    ++ref_count[r];
    if (m != ClassMask::kIgnore) ++mod_count[m];
    if (r == m) {
      ++inter[r];
      ++agree;
    }
  }
  if (counted == 0) throw Error(Errc::AllIgnored, "every reference pixel is marked ignore");

  std::set<int> classes;
  for (const auto& [c, n] : ref_count) classes.insert(c);
  for (const auto& [c, n] : mod_count) classes.insert(c);
  SegMetrics s;
  double dice_sum = 0.0, iou_sum = 0.0, acc_sum = 0.0;
  const auto count = [](const std::map<int, std::size_t>& m, int c) {
    const auto it = m.find(c);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  };
  for (int c : classes) {
    const double rc = count(ref_count, c);
    const double mc = count(mod_count, c);
    const double ic = count(inter, c);
    s.dice[c] = 2.0 * ic / (rc + mc);
    s.iou[c] = ic / (rc + mc - ic);
    dice_sum += s.dice[c];
    iou_sum += s.iou[c];
    if (rc > 0) acc_sum += ic / rc;
  }
  s.mean_dice = dice_sum / static_cast<double>(classes.size());
  s.mean_iou = iou_sum / static_cast<double>(classes.size());
  s.mean_pixel_acc = acc_sum / static_cast<double>(ref_count.size());
  s.pixel_acc = static_cast<double>(agree) / static_cast<double>(counted);
  return s;
}

std::string to_string(Task task) {
  return task == Task::Detection ? "detection" : "segmentation";
}

std::vector<double> PerformanceDelta::agreement_values() const {
  std::vector<double> out;
  const auto push = [&](const std::optional<double>& v) {
    if (v) out.push_back(*v);
  };
  if (task == Task::Detection) {
    push(f1);
    push(mean_iou);
    push(map);
    push(map_small);
  } else {
    push(mean_dice);
    push(mean_iou);
    push(mean_pixel_acc);
  }
  return out;
}

bool is_valid(const PerformanceDelta& perf, double eps) {
  const auto values = perf.agreement_values();
  return std::all_of(values.begin(), values.end(), [&](double v) { return v >= 1.0 - eps; });
}

PerformanceDelta evaluate_detection(const PredictionSet& ref, const PredictionSet& mod,
                                    const DetectionOptions& options, double eps) {
  require_same_model(ref, mod);
  PredictionSet r = ref, m = mod;
  if (options.image_size) {
    r = r.clamped(options.image_size->first, options.image_size->second);
    m = m.clamped(options.image_size->first, options.image_size->second);
  }
  r = r.filtered(options.ref_min_score);
  const PredictionSet m_conf = m.filtered(options.ref_min_score);

  PerformanceDelta p;
  p.pair_id = ref.image_id;
  p.task = Task::Detection;
  p.f1 = f1(r, m_conf, options.iou_thresh);
  p.mean_iou = mean_iou_det(r, m_conf, options.iou_thresh);
  p.mean_iou_matched = valimetrics::mean_iou_matched(r, m_conf, options.iou_thresh);
  p.map = valimetrics::map(r, m);
  p.map_small = valimetrics::map_small(r, m);
  p.valid_eps = eps;
  p.valid = is_valid(p, eps);
  return p;
}

PerformanceDelta evaluate_segmentation(const ClassMask& ref, const ClassMask& mod, double eps) {
  const SegMetrics s = seg_metrics(ref, mod);
  PerformanceDelta p;
  p.task = Task::Segmentation;
  p.mean_dice = s.mean_dice;
  p.mean_iou = s.mean_iou;
  p.mean_pixel_acc = s.mean_pixel_acc;
  p.pixel_acc = s.pixel_acc;
  p.valid_eps = eps;
  p.valid = is_valid(p, eps);
  return p;
}

PredictionSet PredictionFile::lookup(const std::string& image_id,
                                     const std::string& modification) const {
  if (!modification.empty()) {
    if (auto it = sets.find({modification, image_id}); it != sets.end()) return it->second;
  }
  if (auto it = sets.find({"", image_id}); it != sets.end()) return it->second;
  return PredictionSet{image_id, model_id, {}};
}

PredictionFile parse_predictions(const std::string& text, const std::string& default_model_id) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("predictions: ") + e.what());
  }
  PredictionFile file;
  file.model_id = default_model_id;
  const json* entries = &doc;
  if (doc.is_object()) {
    file.model_id = doc.value("model_id", default_model_id);
    if (!doc.contains("predictions")) throw Error(Errc::ParseError, "predictions: missing 'predictions'");
    entries = &doc["predictions"];
  }
  if (!entries->is_array()) throw Error(Errc::ParseError, "predictions: expected a JSON array");
  try {
    for (const auto& e : *entries) {
      const json& id = e.at("image_id");
      const std::string image_id = id.is_string() ? id.get<std::string>() : id.dump();
      const std::string modification = e.value("modification", "");
      Detection d;
      d.class_id = e.at("class_id").get<int>();
      const auto& b = e.at("bbox");
      if (!b.is_array() || b.size() != 4) throw Error(Errc::ParseError, "bbox must have 4 numbers");
      d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      d.score = e.value("score", 1.0);
      if (d.class_id < 0 || !(d.bbox.x_max > d.bbox.x_min) || !(d.bbox.y_max > d.bbox.y_min) ||
          !std::isfinite(d.score)) {
        throw Error(Errc::ParseError, "invalid detection for image '" + image_id + "'");
      }
      auto [it, inserted] =
          file.sets.try_emplace({modification, image_id}, PredictionSet{image_id, file.model_id, {}});
      it->second.detections.push_back(d);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("predictions: ") + e.what());
  }
  return file;
}

PredictionFile load_predictions(const std::filesystem::path& path, const std::string& default_model_id) {
  const auto bytes = read_file(path);
  return parse_predictions(std::string(bytes.begin(), bytes.end()), default_model_id);
}

ClassMask load_mask(const std::filesystem::path& path) {
  const Image8 image = read_image(path);
  if (image.channels != 1) throw Error(Errc::DecodeError, path.string() + ": masks must be single-channel");
  return ClassMask{image.width, image.height, image.data};
}

void save_mask(const std::filesystem::path& path, const ClassMask& mask) {
  Image8 image(mask.width, mask.height, 1);
  image.data = mask.classes;
  write_png(path, image);
}

}  // namespace valimetrics
