#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "valimetrics/analysis.hpp"
#include "valimetrics/perf.hpp"
#include "valimetrics/quality.hpp"

namespace valimetrics {

// Minimal comma-separated table: no quoting, first row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws ParseError
  std::optional<std::size_t> find_column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

// Empty string for absent, "inf"/"-inf" for infinities.
std::string format_number(const std::optional<double>& v);
std::optional<double> parse_number(const std::string& cell);

inline const std::vector<std::string>& quality_metric_names() {
  static const std::vector<std::string> names = {"mse",    "psnr", "ssim",        "ncc", "lpips",
                                                 "cosine", "emd",  "mutual_info", "fid", "entropy_delta"};
  return names;
}

std::optional<double> quality_value(const QualityVector& q, const std::string& metric);

std::string quality_csv(const std::vector<QualityVector>& rows);
std::vector<QualityVector> parse_quality_csv(const std::string& text);

std::string perf_csv(const std::vector<PerformanceDelta>& rows);
std::vector<PerformanceDelta> parse_perf_csv(const std::string& text);

// Key joining quality and performance rows of the same pair.
std::string series_key(const std::string& modification, const std::string& pair_id);

std::vector<MetricSeries> quality_series(const std::vector<QualityVector>& rows);
// Names carry the task: "det.f1", "det.mean_iou", ..., "seg.mean_dice".
std::vector<MetricSeries> perf_series(const std::vector<PerformanceDelta>& rows);

std::map<std::string, std::string> modification_lookup(const std::vector<QualityVector>& quality,
                                                       const std::vector<PerformanceDelta>& perf);

}  // namespace valimetrics
