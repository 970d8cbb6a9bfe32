#include "valimetrics/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "valimetrics/error.hpp"

namespace valimetrics {

namespace {

void require_same_shape(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(Errc::DimensionMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) +
                                             " vs " + std::to_string(b.width) + "x" +
                                             std::to_string(b.height));
  }
}

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    k[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable 'valid' filtering: output is (w-10) x (h-10).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 const std::array<double, kWindow>& k) {
  const int ow = w - kWindow + 1;
  const int oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    const double* s = &src[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * s[x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

Histogram256 Histogram256::of(const GrayImage& image) {
  Histogram256 h;
  h.total = image.size();
  for (double v : image.data) h.bins[intensity_level(v)] += 1.0;
  if (h.total > 0) {
    for (double& b : h.bins) b /= static_cast<double>(h.total);
  }
  return h;
}

double mse(const GrayImage& ref, const GrayImage& mod) {
  require_same_shape(ref, mod);
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = ref.data[i] - mod.data[i];
    acc += d * d;
  }
  return ref.size() ? acc / static_cast<double>(ref.size()) : 0.0;
}

double mse(const Image8& ref, const Image8& mod) {
  if (ref.width != mod.width || ref.height != mod.height || ref.channels != mod.channels) {
    throw Error(Errc::DimensionMismatch, "image shapes differ");
  }
  const auto rp = split_channels(ref);
  const auto mp = split_channels(mod);
  double acc = 0.0;
  for (std::size_t c = 0; c < rp.size(); ++c) acc += mse(rp[c], mp[c]);
  return acc / static_cast<double>(rp.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse_value);
}

double psnr(const GrayImage& ref, const GrayImage& mod) { return psnr_from_mse(mse(ref, mod)); }

double ssim(const GrayImage& ref, const GrayImage& mod) {
  require_same_shape(ref, mod);
  if (std::min(ref.width, ref.height) < kWindow) {
    throw Error(Errc::ImageTooSmall, "SSIM needs at least 11x11 pixels");
  }
  const auto k = gaussian_kernel();
  const int w = ref.width, h = ref.height;
  std::vector<double> xx(ref.size()), yy(ref.size()), xy(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    xx[i] = ref.data[i] * ref.data[i];
    yy[i] = mod.data[i] * mod.data[i];
    xy[i] = ref.data[i] * mod.data[i];
  }
  const auto mu_x = filter_valid(ref.data, w, h, k);
  const auto mu_y = filter_valid(mod.data, w, h, k);
  const auto e_xx = filter_valid(xx, w, h, k);
  const auto e_yy = filter_valid(yy, w, h, k);
  const auto e_xy = filter_valid(xy, w, h, k);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i], my = mu_y[i];
    const double vx = e_xx[i] - mx * mx;
    const double vy = e_yy[i] - my * my;
    const double cxy = e_xy[i] - mx * my;
    acc += ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
           ((mx * mx + my * my + kC1) * (vx + vy + kC2));
  }
  return acc / static_cast<double>(mu_x.size());
}

double ncc(const GrayImage& ref, const GrayImage& mod) {
  require_same_shape(ref, mod);
  const auto n = static_cast<double>(ref.size());
  double mr = 0.0, mm = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    mr += ref.data[i];
    mm += mod.data[i];
  }
  mr /= n;
  mm /= n;
  double srr = 0.0, smm = 0.0, srm = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double a = ref.data[i] - mr, b = mod.data[i] - mm;
    srr += a * a;
    smm += b * b;
    srm += a * b;
  }
  if (srr <= 0.0 || smm <= 0.0) throw Error(Errc::ZeroVariance, "NCC undefined for a constant image");
  return std::clamp(srm / std::sqrt(srr * smm), -1.0, 1.0);
}

double mutual_information(const GrayImage& ref, const GrayImage& mod) {
  require_same_shape(ref, mod);
  constexpr int kBins = 64;
  std::vector<double> joint(kBins * kBins, 0.0);
  std::array<double, kBins> pr{}, pm{};
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const int a = intensity_level(ref.data[i]) / 4;
    const int b = intensity_level(mod.data[i]) / 4;
    joint[a * kBins + b] += 1.0;
  }
  const auto n = static_cast<double>(ref.size());
  for (int a = 0; a < kBins; ++a) {
    for (int b = 0; b < kBins; ++b) {
      double& p = joint[a * kBins + b];
      p /= n;
      pr[a] += p;
      pm[b] += p;
    }
  }
  double mi = 0.0;
  for (int a = 0; a < kBins; ++a) {
    for (int b = 0; b < kBins; ++b) {
      const double p = joint[a * kBins + b];
      if (p > 0.0) mi += p * std::log2(p / (pr[a] * pm[b]));
    }
  }
  return std::max(mi, 0.0);
}

double entropy64(const GrayImage& image) {
  std::array<double, 64> p{};
  for (double v : image.data) p[intensity_level(v) / 4] += 1.0;
  double h = 0.0;
  for (double c : p) h -= plogp(c / static_cast<double>(image.size()));
  return h;
}

double emd(const Histogram256& ref, const Histogram256& mod) {
  double cr = 0.0, cm = 0.0, acc = 0.0;
  for (int k = 0; k < 256; ++k) {
    cr += ref.bins[k];
    cm += mod.bins[k];
    acc += std::abs(cr - cm);
  }
  return acc;
}

double emd(const GrayImage& ref, const GrayImage& mod) {
  require_same_shape(ref, mod);
  return emd(Histogram256::of(ref), Histogram256::of(mod));
}

double entropy(const Histogram256& hist) {
  double h = 0.0;
  for (double p : hist.bins) h -= plogp(p);
  return h + 0.0;  // normalizes -0.0
}

double entropy(const GrayImage& image) { return entropy(Histogram256::of(image)); }

double entropy_delta(const GrayImage& ref, const GrayImage& mod) {
  return std::abs(entropy(ref) - entropy(mod));
}

}  // namespace valimetrics
