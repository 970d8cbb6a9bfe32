// Acceptance checks, one PASS/FAIL line per criterion.
//   acceptance            run all
//   acceptance --only N   run criterion N
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "anscombe.hpp"
#include "detection_scenarios.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "valimetrics/analysis.hpp"
#include "valimetrics/demo.hpp"
#include "valimetrics/modification.hpp"
#include "valimetrics/perceptual.hpp"
#include "valimetrics/perf.hpp"
#include "valimetrics/pipeline.hpp"
#include "valimetrics/quality.hpp"
#include "valimetrics/tables.hpp"

using namespace valimetrics;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VALIMETRICS_CLI + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

GrayImage gray_of(const Image8& img) {
  GrayImage g(img.width, img.height);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = img.data[i];
  return g;
}

std::vector<double> as_double(const Image8& img) { return {img.data.begin(), img.data.end()}; }

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  int bad = 0;
  std::string first;
  auto note = [&](bool ok, const std::string& what) {
    if (!ok && bad++ == 0) first = what;
  };
  for (int t = 0; t < 200; ++t) {
    const int w = testing::rand_int(rng, 1, 8), h = testing::rand_int(rng, 1, 8);
    const int c = testing::rand_int(rng, 0, 1) ? 3 : 1;
    const Image8 a = testing::random_image(rng, w, h, c), b = testing::random_image(rng, w, h, c);
    const double m = mse(a, b), om = oracle::mse(as_double(a), as_double(b));
    note(oracle::rel_close(m, om), fmt::format("mse #{}", t));
    note(oracle::rel_close(psnr_from_mse(m), oracle::psnr(om)), fmt::format("psnr #{}", t));

    const Image8 ga = testing::random_image(rng, w, h, 1), gb = testing::random_image(rng, w, h, 1);
    const GrayImage la = gray_of(ga), lb = gray_of(gb);
    note(oracle::rel_close(mutual_information(la, lb), oracle::mutual_information(la.data, lb.data)),
         fmt::format("mutual_information #{}", t));
    note(oracle::rel_close(emd(la, lb), oracle::emd(la.data, lb.data)), fmt::format("emd #{}", t));

    const int classes = testing::rand_int(rng, 1, 4);
    const int mw = testing::rand_int(rng, 1, 8), mh = testing::rand_int(rng, 1, 8);
    ClassMask r{mw, mh, {}}, d{mw, mh, {}};
    for (int i = 0; i < mw * mh; ++i) {
      const int x = testing::rand_int(rng, 0, classes), y = testing::rand_int(rng, 0, classes);
      r.classes.push_back(static_cast<std::uint8_t>(x == classes ? 255 : x));
      d.classes.push_back(static_cast<std::uint8_t>(y == classes ? 255 : y));
    }
    r.classes[0] = 0;  // keep at least one scored pixel
    const auto s = seg_metrics(r, d);
    const auto o = oracle::seg_metrics(r.classes, d.classes);
    note(s.mean_dice == o.mean_dice && s.mean_iou == o.mean_iou && s.mean_pixel_acc == o.mean_pixel_acc,
         fmt::format("seg_metrics #{}", t));
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = bad == 0 && secs < 10.0;
  out.detail = bad ? fmt::format("{} mismatches, first {}", bad, first)
                   : fmt::format("200 instances, all equal, {:.2f}s", secs);
  return out;
}

GaussianSummary summary_of(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  GaussianSummary g;
  g.mean = mu;
  g.covariance = cov;
  g.n_samples = 100;
  return g;
}

Outcome frechet_closed_form() {
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> mu(-5, 5), var(0.01, 9), u(-1, 1);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = testing::rand_int(rng, 1, 8);
    std::vector<double> ma(d), mb(d), va(d), vb(d);
    Eigen::VectorXd ea(d), eb(d);
    Eigen::MatrixXd ca = Eigen::MatrixXd::Zero(d, d), cb = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      ea(i) = ma[i] = mu(rng);
      eb(i) = mb[i] = mu(rng);
      ca(i, i) = va[i] = var(rng);
      cb(i, i) = vb[i] = var(rng);
    }
    worst = std::max(worst, std::abs(frechet_distance(summary_of(ea, ca), summary_of(eb, cb)) -
                                     oracle::frechet_diagonal(ma, va, mb, vb)));
  }
  // equal full covariance, |dmu|^2 = 9
  Eigen::MatrixXd g(3, 3);
  for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = u(rng);
  const Eigen::MatrixXd cov = g * g.transpose() + Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 3;
  b << 1, 2 + 3, 3;
  const double nine = frechet_distance(summary_of(a, cov), summary_of(b, cov));
  Outcome out;
  out.pass = worst <= 1e-6 && std::abs(nine - 9.0) <= 1e-6;
  out.detail = fmt::format("max diagonal error {:.2e} over 100 cases; equal covariance gives {:.9f}", worst, nine);
  return out;
}

Outcome identity_suite() {
  std::mt19937_64 rng(1003);
  int bad = 0;
  for (int t = 0; t < 20; ++t) {
    const int w = testing::rand_int(rng, 11, 40), h = testing::rand_int(rng, 11, 40);
    const Image8 img = testing::random_image(rng, w, h, 3);
    const GrayImage l = to_luma(img);
    FeatureStack f;
    f.extractor_id = "unit";
    for (int k = 0; k < 2; ++k) {
      FeatureMap m(static_cast<std::uint32_t>(testing::rand_int(rng, 1, 6)), 3, 4);
      for (auto& v : m.data) v = std::uniform_real_distribution<float>(-1, 1)(rng);
      f.layers.push_back(m);
    }
    std::vector<Detection> boxes;
    for (int k = testing::rand_int(rng, 0, 6); k > 0; --k) {
      const double x = testing::rand_int(rng, 0, w - 4), y = testing::rand_int(rng, 0, h - 4);
      boxes.push_back({testing::rand_int(rng, 0, 3),
                       {x, y, x + testing::rand_int(rng, 2, 40), y + testing::rand_int(rng, 2, 40)},
                       std::uniform_real_distribution<double>(0.3, 1.0)(rng)});
    }
    const PredictionSet p{"img", "m", boxes};
    ClassMask mask{w, h, {}};
    for (int i = 0; i < w * h; ++i) mask.classes.push_back(static_cast<std::uint8_t>(testing::rand_int(rng, 0, 3)));

    DetectionOptions o;
    o.image_size = std::make_pair(w, h);
    const auto det = evaluate_detection(p, p, o, 0.0);
    const auto seg = evaluate_segmentation(mask, mask, 0.0);
    bool ok = ssim(l, l) == 1.0 && mse(img, img) == 0.0 && lpips(f, f, LpipsWeights::uniform(f)) == 0.0 &&
              emd(l, l) == 0.0 && entropy_delta(l, l) == 0.0 && det.valid && seg.valid;
    for (double v : det.agreement_values()) ok = ok && v == 1.0;
    for (double v : seg.agreement_values()) ok = ok && v == 1.0;
    bad += !ok;
  }
  return {bad == 0, fmt::format("{} of 20 images break an identity", bad)};
}

Outcome jpeg_monotonicity() {
  const auto t0 = Clock::now();
  const auto stats = sweep(VALIMETRICS_TEST_DATA "/natural", {90, 50, 30, 15, 5}, 4);
  const double secs = seconds_since(t0);
  bool increasing = true;
  std::string means;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (i && !(stats[i].factor_mean > stats[i - 1].factor_mean)) increasing = false;
    means += fmt::format("{}q{}={:.2f}", i ? " " : "", stats[i].quality, stats[i].factor_mean);
  }
  Outcome out;
  out.pass = stats.size() == 5 && stats[0].n == 50 && increasing && stats[0].factor_mean >= 3 &&
             stats[0].factor_mean <= 12 && secs < 60;
  out.detail = fmt::format("{} images: {} ({:.1f}s)", stats.empty() ? 0 : stats[0].n, means, secs);
  return out;
}

Outcome degradation_direction(const fs::path& work) {
  const fs::path a = work / "c5a", b = work / "c5b";
  if (cli(fmt::format("demo --out \"{}\" --seed 0 --run --jobs 4", a.string())) != 0 ||
      cli(fmt::format("demo --out \"{}\" --seed 0 --run --jobs 4", b.string())) != 0) {
    return {false, "demo run did not exit 0"};
  }
  const std::string csv_a = slurp(a / "out/reports/correlation.csv");
  const bool deterministic = csv_a == slurp(b / "out/reports/correlation.csv");
  const auto pairs = parse_quality_csv(slurp(a / "out/quality.csv")).size();

  std::map<std::string, double> r;
  const CsvTable t = parse_csv(csv_a);
  for (const auto& row : t.rows) {
    if (row[0] != "det.mean_iou" || row[2] != "pearson") continue;
    if (auto v = parse_number(row[3])) r[row[1]] = std::abs(*v);
  }
  const bool strong = r.count("mse") && r.count("ssim") && r["mse"] >= 0.8 && r["ssim"] >= 0.8;
  std::string weakest;
  for (const auto& [k, v] : r) {
    if (weakest.empty() || v < r[weakest]) weakest = k;
  }
  std::vector<std::pair<double, std::string>> order;
  for (const auto& [k, v] : r) order.emplace_back(v, k);
  std::sort(order.rbegin(), order.rend());
  std::string ranking;
  for (const auto& [v, k] : order) ranking += fmt::format(" {}={:.2f}", k, v);

  Outcome out;
  out.pass = pairs == 100 && strong && weakest == "entropy_delta" && deterministic;
  out.detail = fmt::format("{} pairs; |r| vs det.mean_iou:{}; mse/ssim>=0.8 {}; entropy_delta last {}; "
                           "same seed identical {}",
                           pairs, ranking, strong ? "yes" : "no", weakest == "entropy_delta" ? "yes" : "no (weakest is " + weakest + ")",
                           deterministic ? "yes" : "no");
  return out;
}

Outcome statistics() {
  double worst = 0;
  for (int s = 0; s < 4; ++s) worst = std::max(worst, std::abs(pearson(anscombe::x(s), anscombe::y[s]) - 0.816));
  const double rho = spearman({1, 2, 3, 4}, {1, 3, 2, 4});
  return {worst <= 0.001 && rho == 0.8,
          fmt::format("Anscombe max |r-0.816| = {:.5f}; spearman = {}", worst, rho)};
}

Outcome detection_regression() {
  int bad = 0;
  std::string which;
  const auto all = scenarios::all();
  for (const auto& s : all) {
    const PredictionSet r{"img", "m", s.ref}, m{"img", "m", s.mod};
    const bool ok = std::abs(f1(r, m) - s.f1) <= 1e-12 && std::abs(mean_iou_det(r, m) - s.mean_iou) <= 1e-12 &&
                    std::abs(map(r, m).value_or(-1) - s.map) <= 1e-12;
    if (!ok) {
      ++bad;
      which += " '" + s.name + "'";
    }
  }
  return {bad == 0 && all.size() == 10, fmt::format("{} scenarios, {} off{}", all.size(), bad, which)};
}

Outcome determinism(const fs::path& work) {
  const fs::path d = work / "c8";
  if (cli(fmt::format("demo --out \"{}\" --seed 0", d.string())) != 0) return {false, "demo failed"};
  const std::string cfg = (d / "run.toml").string();
  const int rc1 = cli(fmt::format("run --config \"{}\" --jobs 1 --out-dir \"{}\"", cfg, (d / "j1").string()));
  const int rc8 = cli(fmt::format("run --config \"{}\" --jobs 8 --out-dir \"{}\"", cfg, (d / "j8").string()));
  std::string differing;
  for (const char* f : {"quality.csv", "perf.csv", "reports/correlation.csv"}) {
    const std::string x = slurp(d / "j1" / f), y = slurp(d / "j8" / f);
    if (x.empty() || x != y) differing += std::string(" ") + f;
  }
  return {rc1 == 0 && rc8 == 0 && differing.empty(),
          fmt::format("exit codes {}/{}; {}", rc1, rc8, differing.empty() ? "all three files byte-identical" : "differ:" + differing)};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 3 && std::string(argv[1]) == "--only") only = std::atoi(argv[2]);
  testing::TempDir work("acceptance");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"oracle equivalence", oracle_equivalence},
      {"closed-form Frechet", frechet_closed_form},
      {"identity suite", identity_suite},
      {"JPEG monotonicity", jpeg_monotonicity},
      {"degradation direction", [&] { return degradation_direction(work.path); }},
      {"statistical correctness", statistics},
      {"detection regression", detection_regression},
      {"determinism", [&] { return determinism(work.path); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << fmt::format("{} {} {}: {}", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first, o.detail) << std::endl;
  }
  return failed ? 1 : 0;
}
