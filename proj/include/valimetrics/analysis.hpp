#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "valimetrics/error.hpp"

namespace valimetrics {

// One metric column; keys identify a pair (and its modification).
struct MetricSeries {
  std::string name;
  std::vector<std::pair<std::string, double>> values;
};

enum class CorrelationMethod { Pearson, Spearman };
std::string to_string(CorrelationMethod method);
CorrelationMethod parse_correlation_method(const std::string& name);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);
// Fractional ranks starting at 1; ties share their average rank.
std::vector<double> fractional_ranks(const std::vector<double>& v);

// Joins on key and drops non-finite values on either side.
std::pair<std::vector<double>, std::vector<double>> join_series(const MetricSeries& x,
                                                                const MetricSeries& y);

double correlate(const MetricSeries& x, const MetricSeries& y, CorrelationMethod method);

struct CorrelationCell {
  std::optional<double> r;
  std::size_t n_used = 0;
  std::optional<Errc> reason;  // why r is absent
};

struct CorrelationMatrix {
  std::vector<std::string> rows;  // performance metrics
  std::vector<std::string> cols;  // quality metrics
  std::vector<std::vector<CorrelationCell>> cells;
  CorrelationMethod method = CorrelationMethod::Pearson;

  const CorrelationCell& at(const std::string& row, const std::string& col) const;
};

CorrelationMatrix correlation_matrix(const std::vector<MetricSeries>& quality,
                                     const std::vector<MetricSeries>& perf,
                                     CorrelationMethod method);

// Type-7 (linear interpolation) quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);

struct BoxStats {
  std::string metric;
  std::string modification;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double whisker_lo = 0, whisker_hi = 0;
  std::vector<double> outliers;
  std::size_t n = 0;
};

BoxStats box_stats(const std::string& metric, const std::string& group, std::vector<double> values);

// Groups the series by modification (looked up per key); groups come out
// sorted by modification tag. Non-finite values are dropped.
std::vector<BoxStats> boxplot_stats(const MetricSeries& series,
                                    const std::map<std::string, std::string>& modification_of);

struct ReportOptions {
  bool plots = false;
  // Markdown tables are split by this row-name prefix ("det." / "seg.").
  std::vector<std::pair<std::string, std::string>> row_groups;
};

std::string correlation_csv(const CorrelationMatrix& corr);
std::string correlation_markdown(const CorrelationMatrix& corr, const ReportOptions& options = {});
std::string boxstats_json(const std::vector<BoxStats>& stats);
std::string boxplot_svg(const std::vector<BoxStats>& stats);

// Writes correlation.csv, correlation.md, boxstats.json and optionally plots/*.svg.
void emit_report(const CorrelationMatrix& corr, const std::vector<BoxStats>& stats,
                 const std::filesystem::path& out_dir, const ReportOptions& options = {});

}  // namespace valimetrics
