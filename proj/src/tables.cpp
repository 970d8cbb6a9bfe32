#include "valimetrics/tables.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "valimetrics/error.hpp"
#include "valimetrics/image.hpp"

namespace valimetrics {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

void check_cell(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) {
    throw Error(Errc::ParseError, "value '" + s + "' cannot be written to CSV");
  }
}

std::optional<double> cell(const CsvTable& t, const std::vector<std::string>& row, const char* name) {
  const auto c = t.find_column(name);
  if (!c || *c >= row.size()) return std::nullopt;
  return parse_number(row[*c]);
}

std::string text_cell(const CsvTable& t, const std::vector<std::string>& row, const char* name) {
  const auto c = t.find_column(name);
  return c && *c < row.size() ? row[*c] : std::string();
}

}  // namespace

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t CsvTable::column(const std::string& name) const {
  if (auto c = find_column(name)) return *c;
  throw Error(Errc::ParseError, "missing CSV column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split_line(line);
      first = false;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  if (first) throw Error(Errc::ParseError, "empty CSV document");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()));
}

std::string format_number(const std::optional<double>& v) {
  if (!v) return "";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  if (std::isnan(*v)) return "";
  return fmt::format("{:.12g}", *v);
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) throw Error(Errc::ParseError, "not a number: '" + cell + "'");
  return v;
}

std::optional<double> quality_value(const QualityVector& q, const std::string& metric) {
  if (metric == "mse") return q.mse;
  if (metric == "psnr") return q.psnr;
  if (metric == "ssim") return q.ssim;
  if (metric == "ncc") return q.ncc;
  if (metric == "lpips") return q.lpips;
  if (metric == "cosine") return q.cosine;
  if (metric == "emd") return q.emd;
  if (metric == "mutual_info") return q.mutual_info;
  if (metric == "fid") return q.fid;
  if (metric == "entropy_delta") return q.entropy_delta;
  throw Error(Errc::ParseError, "unknown quality metric '" + metric + "'");
}

std::string quality_csv(const std::vector<QualityVector>& rows) {
  std::string out = "pair_id,modification";
  for (const auto& n : quality_metric_names()) out += "," + n;
  out += ",entropy_ref,entropy_mod,cosine_mode\n";
  for (const auto& q : rows) {
    check_cell(q.pair_id);
    check_cell(q.modification);
    out += q.pair_id + "," + q.modification;
    for (const auto& n : quality_metric_names()) out += "," + format_number(quality_value(q, n));
    out += "," + format_number(q.entropy_ref) + "," + format_number(q.entropy_mod) + "," + q.cosine_mode + "\n";
  }
  return out;
}

std::vector<QualityVector> parse_quality_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const std::size_t id_col = t.column("pair_id");
  std::vector<QualityVector> out;
  for (const auto& row : t.rows) {
    QualityVector q;
    q.pair_id = row.at(id_col);
    q.modification = text_cell(t, row, "modification");
    q.mse = cell(t, row, "mse");
    q.psnr = cell(t, row, "psnr");
    q.ssim = cell(t, row, "ssim");
    q.ncc = cell(t, row, "ncc");
    q.lpips = cell(t, row, "lpips");
    q.cosine = cell(t, row, "cosine");
    q.emd = cell(t, row, "emd");
    q.mutual_info = cell(t, row, "mutual_info");
    q.fid = cell(t, row, "fid");
    q.entropy_delta = cell(t, row, "entropy_delta");
    q.entropy_ref = cell(t, row, "entropy_ref");
    q.entropy_mod = cell(t, row, "entropy_mod");
    q.cosine_mode = text_cell(t, row, "cosine_mode");
    out.push_back(std::move(q));
  }
  return out;
}

std::string perf_csv(const std::vector<PerformanceDelta>& rows) {
  std::string out =
      "pair_id,modification,task,f1,mean_iou,map,map_small,mean_dice,mean_pixel_acc,"
      "mean_iou_matched,pixel_acc,valid,valid_eps\n";
  for (const auto& p : rows) {
    check_cell(p.pair_id);
    check_cell(p.modification);
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", p.pair_id, p.modification,
                       p.task == Task::Detection ? "det" : "seg", format_number(p.f1),
                       format_number(p.mean_iou), format_number(p.map), format_number(p.map_small),
                       format_number(p.mean_dice), format_number(p.mean_pixel_acc),
                       format_number(p.mean_iou_matched), format_number(p.pixel_acc),
                       p.valid ? 1 : 0, format_number(p.valid_eps));
  }
  return out;
}

std::vector<PerformanceDelta> parse_perf_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const std::size_t id_col = t.column("pair_id");
  const std::size_t task_col = t.column("task");
  std::vector<PerformanceDelta> out;
  for (const auto& row : t.rows) {
    PerformanceDelta p;
    p.pair_id = row.at(id_col);
    p.modification = text_cell(t, row, "modification");
    const std::string task = row.at(task_col);
    if (task != "det" && task != "seg") throw Error(Errc::ParseError, "unknown task '" + task + "'");
    p.task = task == "det" ? Task::Detection : Task::Segmentation;
    p.f1 = cell(t, row, "f1");
    p.mean_iou = cell(t, row, "mean_iou");
    p.map = cell(t, row, "map");
    p.map_small = cell(t, row, "map_small");
    p.mean_dice = cell(t, row, "mean_dice");
    p.mean_pixel_acc = cell(t, row, "mean_pixel_acc");
    p.mean_iou_matched = cell(t, row, "mean_iou_matched");
    p.pixel_acc = cell(t, row, "pixel_acc");
    p.valid = text_cell(t, row, "valid") == "1";
    p.valid_eps = cell(t, row, "valid_eps").value_or(0.0);
    out.push_back(std::move(p));
  }
  return out;
}

std::string series_key(const std::string& modification, const std::string& pair_id) {
  return modification + "|" + pair_id;
}

std::vector<MetricSeries> quality_series(const std::vector<QualityVector>& rows) {
  std::vector<MetricSeries> out;
  for (const auto& name : quality_metric_names()) {
    MetricSeries s{name, {}};
    for (const auto& q : rows) {
      if (auto v = quality_value(q, name)) s.values.emplace_back(series_key(q.modification, q.pair_id), *v);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<MetricSeries> perf_series(const std::vector<PerformanceDelta>& rows) {
  using Getter = std::optional<double> PerformanceDelta::*;
  const std::vector<std::pair<std::string, Getter>> det = {{"det.f1", &PerformanceDelta::f1},
                                                           {"det.mean_iou", &PerformanceDelta::mean_iou},
                                                           {"det.map", &PerformanceDelta::map},
                                                           {"det.map_small", &PerformanceDelta::map_small}};
  const std::vector<std::pair<std::string, Getter>> seg = {
      {"seg.mean_dice", &PerformanceDelta::mean_dice},
      {"seg.mean_iou", &PerformanceDelta::mean_iou},
      {"seg.mean_pixel_acc", &PerformanceDelta::mean_pixel_acc}};
  std::vector<MetricSeries> out;
  for (auto [task, fields] : {std::pair{Task::Detection, &det}, std::pair{Task::Segmentation, &seg}}) {
    const bool present = std::any_of(rows.begin(), rows.end(), [&](const auto& p) { return p.task == task; });
    if (!present) continue;
    for (const auto& [name, field] : *fields) {
      MetricSeries s{name, {}};
      for (const auto& p : rows) {
        if (p.task == task && (p.*field)) s.values.emplace_back(series_key(p.modification, p.pair_id), *(p.*field));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::map<std::string, std::string> modification_lookup(const std::vector<QualityVector>& quality,
                                                       const std::vector<PerformanceDelta>& perf) {
  std::map<std::string, std::string> out;
  for (const auto& q : quality) out[series_key(q.modification, q.pair_id)] = q.modification;
  for (const auto& p : perf) out[series_key(p.modification, p.pair_id)] = p.modification;
  return out;
}

}  // namespace valimetrics
