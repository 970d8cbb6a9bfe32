#pragma once
// Brute-force reference implementations. Deliberately naive and written
// without touching the library's helpers, so they can check it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

namespace oracle {

// flat values in [0,255], any layout; same length for both
inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (long double)(a[i] - b[i]) * (a[i] - b[i]);
  return double(s / a.size());
}

inline double psnr(double mse_value) {
  if (mse_value == 0) return INFINITY;
  return 20.0 * std::log10(255.0) - 10.0 * std::log10(mse_value);
}

inline int level(double v) {
  double r = std::floor(v + 0.5);
  if (r < 0) r = 0;
  if (r > 255) r = 255;
  return int(r);
}

// 64 bins of width 4 on the rounded intensity level
inline double mutual_information(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  std::map<std::pair<int, int>, int> joint;
  std::map<int, int> ma, mb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    int x = level(a[i]) / 4, y = level(b[i]) / 4;
    joint[{x, y}]++;
  }
  for (double v : a) ma[level(v) / 4]++;
  for (double v : b) mb[level(v) / 4]++;
  double mi = 0;
  for (auto& [k, c] : joint) {
    double pxy = c / n, px = ma[k.first] / n, py = mb[k.second] / n;
    mi += pxy * (std::log(pxy) - std::log(px) - std::log(py)) / std::log(2.0);
  }
  return mi;
}

// 1-D earth mover's distance between two equal-size samples: pair the
// sorted values and average the distances.
inline double emd(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<int> x, y;
  for (double v : a) x.push_back(level(v));
  for (double v : b) y.push_back(level(v));
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  long s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return double(s) / double(x.size());
}

inline double entropy(const std::vector<double>& a) {
  std::map<int, int> h;
  for (double v : a) h[level(v)]++;
  double e = 0;
  for (auto& [k, c] : h) {
    double p = double(c) / a.size();
    e -= p * std::log2(p);
  }
  return e;
}

struct Seg {
  double mean_dice, mean_iou, mean_pixel_acc;
};

// 255 in ref means ignore; classes are everything seen in ref or mod on the
// remaining pixels.
inline Seg seg_metrics(const std::vector<std::uint8_t>& ref, const std::vector<std::uint8_t>& mod) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (ref[i] != 255) keep.push_back(i);
  std::set<int> classes, ref_classes;
  for (auto i : keep) {
    classes.insert(ref[i]);
    ref_classes.insert(ref[i]);
    if (mod[i] != 255) classes.insert(mod[i]);
  }
  double dice = 0, iou = 0, acc = 0;
  for (int c : classes) {
    std::set<std::size_t> R, M, I, U;
    for (auto i : keep) {
      if (ref[i] == c) R.insert(i);
      if (mod[i] == c) M.insert(i);
    }
    std::set_intersection(R.begin(), R.end(), M.begin(), M.end(), std::inserter(I, I.end()));
    std::set_union(R.begin(), R.end(), M.begin(), M.end(), std::inserter(U, U.end()));
    dice += 2.0 * I.size() / double(R.size() + M.size());
    iou += double(I.size()) / double(U.size());
    if (!R.empty()) acc += double(I.size()) / double(R.size());
  }
  return {dice / classes.size(), iou / classes.size(), acc / ref_classes.size()};
}

// IoU of integer boxes by counting unit cells.
inline double iou_grid(int ax0, int ay0, int ax1, int ay1, int bx0, int by0, int bx1, int by1) {
  long inter = 0, uni = 0;
  const int lo_x = std::min(ax0, bx0), hi_x = std::max(ax1, bx1);
  const int lo_y = std::min(ay0, by0), hi_y = std::max(ay1, by1);
  for (int y = lo_y; y < hi_y; ++y)
    for (int x = lo_x; x < hi_x; ++x) {
      bool in_a = x >= ax0 && x < ax1 && y >= ay0 && y < ay1;
      bool in_b = x >= bx0 && x < bx1 && y >= by0 && y < by1;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return uni ? double(inter) / double(uni) : 0.0;
}

// Frechet distance when both covariances are diagonal.
inline double frechet_diagonal(const std::vector<double>& mu_a, const std::vector<double>& var_a,
                               const std::vector<double>& mu_b, const std::vector<double>& var_b) {
  double d = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    d += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
    double s = std::sqrt(var_a[i]) - std::sqrt(var_b[i]);
    d += s * s;
  }
  return d;
}

inline bool rel_close(double a, double b, double rel = 1e-9, double abs_floor = 1e-12) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

}  // namespace oracle
