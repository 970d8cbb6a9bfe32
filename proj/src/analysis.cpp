#include "valimetrics/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "valimetrics/image.hpp"

namespace valimetrics {

std::string to_string(CorrelationMethod method) {
  return method == CorrelationMethod::Pearson ? "pearson" : "spearman";
}

CorrelationMethod parse_correlation_method(const std::string& name) {
  if (name == "pearson") return CorrelationMethod::Pearson;
  if (name == "spearman") return CorrelationMethod::Spearman;
  throw Error(Errc::ConfigError, "unknown correlation method '" + name + "'");
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(Errc::DimensionMismatch, "series lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw Error(Errc::TooFewPoints, "need at least 3 points, got " + std::to_string(n));
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error(Errc::ConstantSeries, "correlation of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(fractional_ranks(x), fractional_ranks(y));
}

std::pair<std::vector<double>, std::vector<double>> join_series(const MetricSeries& x,
                                                                const MetricSeries& y) {
  std::map<std::string, double> lookup(y.values.begin(), y.values.end());
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& [key, xv] : x.values) {
    auto it = lookup.find(key);
    if (it == lookup.end() || !std::isfinite(xv) || !std::isfinite(it->second)) continue;
    out.first.push_back(xv);
    out.second.push_back(it->second);
  }
  return out;
}

double correlate(const MetricSeries& x, const MetricSeries& y, CorrelationMethod method) {
  const auto [a, b] = join_series(x, y);
  return method == CorrelationMethod::Pearson ? pearson(a, b) : spearman(a, b);
}

const CorrelationCell& CorrelationMatrix::at(const std::string& row, const std::string& col) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(cols.begin(), cols.end(), col);
  if (r == rows.end() || c == cols.end()) {
    throw Error(Errc::DimensionMismatch, "no correlation cell " + row + " x " + col);
  }
  return cells[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - cols.begin())];
}

CorrelationMatrix correlation_matrix(const std::vector<MetricSeries>& quality,
                                     const std::vector<MetricSeries>& perf,
                                     CorrelationMethod method) {
  CorrelationMatrix m;
  m.method = method;
  for (const auto& p : perf) m.rows.push_back(p.name);
  for (const auto& q : quality) m.cols.push_back(q.name);
  for (const auto& p : perf) {
    std::vector<CorrelationCell> row;
    for (const auto& q : quality) {
      CorrelationCell cell;
      const auto [a, b] = join_series(q, p);
      cell.n_used = a.size();
      try {
        cell.r = method == CorrelationMethod::Pearson ? pearson(a, b) : spearman(a, b);
      } catch (const Error& e) {
        cell.reason = e.code();
      }
      row.push_back(cell);
    }
    m.cells.push_back(std::move(row));
  }
  return m;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw Error(Errc::TooFewPoints, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(const std::string& metric, const std::string& group, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.metric = metric;
  s.modification = group;
  s.n = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr, hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_lo = s.max;
  s.whisker_hi = s.min;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.whisker_lo = std::min(s.whisker_lo, v);
      s.whisker_hi = std::max(s.whisker_hi, v);
    }
  }
  return s;
}

std::vector<BoxStats> boxplot_stats(const MetricSeries& series,
                                    const std::map<std::string, std::string>& modification_of) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& [key, v] : series.values) {
    if (!std::isfinite(v)) continue;
    auto it = modification_of.find(key);
    groups[it == modification_of.end() ? std::string("unknown") : it->second].push_back(v);
  }
  std::vector<BoxStats> out;
  for (auto& [group, values] : groups) out.push_back(box_stats(series.name, group, std::move(values)));
  return out;
}

namespace {

std::string display_name(const std::string& metric) {
  static const std::map<std::string, std::string> names = {
      {"mse", "MSE"}, {"psnr", "PSNR"}, {"ssim", "SSIM"}, {"ncc", "NCC"}, {"lpips", "LPIPS"},
      {"cosine", "Cosine Similarity"}, {"emd", "Earth Mover's Distance"},
      {"mutual_info", "Mutual Information"}, {"fid", "FID Score"}, {"entropy_delta", "Entropy"},
      {"f1", "F1 Score"}, {"mean_iou", "Mean IoU"}, {"map", "mAP"}, {"map_small", "mAP small"},
      {"mean_dice", "Mean Dice Coefficient"}, {"mean_pixel_acc", "Mean Pixel Accuracy"}};
  const auto dot = metric.find('.');
  const std::string base = dot == std::string::npos ? metric : metric.substr(dot + 1);
  auto it = names.find(base);
  return it == names.end() ? metric : it->second;
}

}  // namespace

std::string correlation_csv(const CorrelationMatrix& corr) {
  std::string out = "perf_metric,quality_metric,method,r,n_used,reason\n";
  for (std::size_t i = 0; i < corr.rows.size(); ++i) {
    for (std::size_t j = 0; j < corr.cols.size(); ++j) {
      const auto& c = corr.cells[i][j];
      out += fmt::format("{},{},{},{},{},{}\n", corr.rows[i], corr.cols[j], to_string(corr.method),
                         c.r ? fmt::format("{:.6f}", *c.r) : "", c.n_used,
                         c.reason ? std::string(to_string(*c.reason)) : "");
    }
  }
  return out;
}

std::string correlation_markdown(const CorrelationMatrix& corr, const ReportOptions& options) {
  auto groups = options.row_groups;
  if (groups.empty()) groups.emplace_back("Correlation", "");
  std::string out;
  for (const auto& [title, prefix] : groups) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < corr.rows.size(); ++i) {
      if (corr.rows[i].rfind(prefix, 0) == 0) rows.push_back(i);
    }
    if (rows.empty()) continue;
    if (!out.empty()) out += "\n";
    out += fmt::format("## {} ({})\n\n| Metric |", title, to_string(corr.method));
    for (const auto& c : corr.cols) out += " " + display_name(c) + " |";
    out += "\n|---|";
    for (std::size_t j = 0; j < corr.cols.size(); ++j) out += "---:|";
    out += "\n";
    for (std::size_t i : rows) {
      // Bold the strongest |r| of the row.
      std::optional<std::size_t> strongest;
      for (std::size_t j = 0; j < corr.cols.size(); ++j) {
        const auto& r = corr.cells[i][j].r;
        if (r && (!strongest || std::abs(*r) > std::abs(*corr.cells[i][*strongest].r))) strongest = j;
      }
      out += "| **" + display_name(corr.rows[i]) + "** |";
      for (std::size_t j = 0; j < corr.cols.size(); ++j) {
        const auto& r = corr.cells[i][j].r;
        if (!r) {
          out += " n/a |";
        } else if (strongest == j) {
          out += fmt::format(" **{:.2f}** |", *r);
        } else {
          out += fmt::format(" {:.2f} |", *r);
        }
      }
      out += "\n";
    }
  }
  return out;
}

std::string boxstats_json(const std::vector<BoxStats>& stats) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : stats) {
    arr.push_back({{"metric", s.metric}, {"modification", s.modification}, {"n", s.n},
                   {"min", s.min}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3},
                   {"max", s.max}, {"whisker_lo", s.whisker_lo}, {"whisker_hi", s.whisker_hi},
                   {"outliers", s.outliers}});
  }
  return arr.dump(2) + "\n";
}

std::string boxplot_svg(const std::vector<BoxStats>& stats) {
  constexpr double kWidth = 640, kHeight = 360, kLeft = 60, kRight = 20, kTop = 30, kBottom = 60;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : stats) {
    lo = std::min(lo, s.min);
    hi = std::max(hi, s.max);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double plot_h = kHeight - kTop - kBottom;
  const auto y = [&](double v) { return kTop + (hi - v) / (hi - lo) * plot_h; };
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(std::max<std::size_t>(stats.size(), 1));
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
      kWidth, kHeight);
  if (!stats.empty()) {
    out += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"14\">{}</text>\n", kLeft, stats.front().metric);
  }
  out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kLeft, kTop,
                     kTop + plot_h);
  out += fmt::format("<text x=\"4\" y=\"{:.2f}\">{:.4g}</text>\n", y(hi) + 4, hi);
  out += fmt::format("<text x=\"4\" y=\"{:.2f}\">{:.4g}</text>\n", y(lo) + 4, lo);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double half = std::min(slot * 0.3, 40.0);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n",
                       cx, y(s.whisker_hi), y(s.q3));
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n",
                       cx, y(s.q1), y(s.whisker_lo));
    out += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#9ecae1\" stroke=\"black\"/>\n",
        cx - half, y(s.q3), 2 * half, std::max(y(s.q1) - y(s.q3), 0.5));
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{2:.2f}\" x2=\"{1:.2f}\" y2=\"{2:.2f}\" stroke=\"black\" stroke-width=\"2\"/>\n",
                       cx - half, cx + half, y(s.median));
    for (double o : s.outliers) {
      out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n", cx, y(o));
    }
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", cx,
                       kHeight - kBottom + 18, s.modification);
  }
  out += "</svg>\n";
  return out;
}

void emit_report(const CorrelationMatrix& corr, const std::vector<BoxStats>& stats,
                 const std::filesystem::path& out_dir, const ReportOptions& options) {
  if ((corr.rows.empty() || corr.cols.empty()) && stats.empty()) {
    throw Error(Errc::EmptyReport, "nothing to report");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  if (!corr.rows.empty() && !corr.cols.empty()) {
    write_text_file(out_dir / "correlation.csv", correlation_csv(corr));
    write_text_file(out_dir / "correlation.md", correlation_markdown(corr, options));
  }
  write_text_file(out_dir / "boxstats.json", boxstats_json(stats));
  if (options.plots) {
    std::map<std::string, std::vector<BoxStats>> by_metric;
    for (const auto& s : stats) by_metric[s.metric].push_back(s);
    for (const auto& [metric, group] : by_metric) {
      write_text_file(out_dir / "plots" / (metric + ".svg"), boxplot_svg(group));
    }
  }
}

}  // namespace valimetrics
