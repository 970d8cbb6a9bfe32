#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "valimetrics/error.hpp"
#include "valimetrics/modification.hpp"
#include "valimetrics/quality.hpp"

using namespace valimetrics;
using testing::constant;
using testing::gray;

namespace {
GrayImage random_gray(std::mt19937_64& rng, int w, int h) {
  GrayImage g(w, h);
  for (auto& v : g.data) v = testing::rand_int(rng, 0, 255);
  return g;
}
}  // namespace

TEST_CASE("mse examples") {
  CHECK(mse(constant(4, 4, 7), constant(4, 4, 7)) == 0.0);
  CHECK(mse(constant(4, 4, 0), constant(4, 4, 2)) == 4.0);
  const GrayImage checker = gray(2, 2, {0, 255, 255, 0});
  const GrayImage inverted = gray(2, 2, {255, 0, 0, 255});
  CHECK(mse(checker, inverted) == 65025.0);
  CHECK_THROWS_AS(mse(constant(2, 2, 0), constant(3, 2, 0)), Error);
}

TEST_CASE("mse on RGB averages over every channel value") {
  Image8 a(2, 1, 3, 0), b(2, 1, 3, 0);
  b.at(0, 0, 1) = 6;  // one of six values differs by 6
  CHECK(mse(a, b) == doctest::Approx(6.0));
}

TEST_CASE("psnr examples") {
  CHECK(std::isinf(psnr(constant(3, 3, 9), constant(3, 3, 9))));
  CHECK(psnr_from_mse(65025.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(psnr_from_mse(4.0) == doctest::Approx(42.110204).epsilon(1e-8));
  CHECK(psnr_from_mse(4.0) == doctest::Approx(20 * std::log10(255.0 / 2.0)).epsilon(1e-12));
}

TEST_CASE("ssim examples") {
  std::mt19937_64 rng(11);
  const GrayImage a = random_gray(rng, 24, 20);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(constant(16, 16, 0), constant(16, 16, 255)) ==
        doctest::Approx(6.5025 / 65031.5025).epsilon(1e-12));
  CHECK(ssim(constant(16, 16, 93), constant(16, 16, 93)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ssim(constant(10, 10, 0), constant(10, 10, 0)), Error);
}

TEST_CASE("ssim is symmetric and at most one") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const GrayImage a = random_gray(rng, 16, 13), b = random_gray(rng, 16, 13);
    const double s = ssim(a, b);
    CHECK(s <= 1.0);
    CHECK(s == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("ncc examples") {
  std::mt19937_64 rng(13);
  const GrayImage a = random_gray(rng, 8, 8);
  CHECK(ncc(a, a) == doctest::Approx(1.0));
  GrayImage inv = a, affine = a;
  for (auto& v : inv.data) v = 255 - v;
  for (auto& v : affine.data) v = 0.5 * v + 20;
  CHECK(ncc(a, inv) == doctest::Approx(-1.0));
  CHECK(ncc(a, affine) == doctest::Approx(1.0));
  try {
    ncc(constant(4, 4, 3), random_gray(rng, 4, 4));
    FAIL("expected ZeroVariance");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroVariance);
  }
}

TEST_CASE("mutual information examples") {
  std::mt19937_64 rng(14);
  CHECK(mutual_information(constant(4, 4, 80), random_gray(rng, 4, 4)) == doctest::Approx(0.0));
  const GrayImage halves = gray(2, 2, {0, 0, 255, 255});
  CHECK(mutual_information(halves, halves) == doctest::Approx(1.0).epsilon(1e-12));
  const GrayImage rows = gray(2, 2, {0, 0, 255, 255});
  const GrayImage cols = gray(2, 2, {0, 255, 0, 255});
  CHECK(mutual_information(rows, cols) == doctest::Approx(0.0));
}

TEST_CASE("emd examples") {
  CHECK(emd(constant(5, 5, 40), constant(5, 5, 40)) == 0.0);
  CHECK(emd(constant(5, 5, 0), constant(5, 5, 10)) == doctest::Approx(10.0));
  CHECK(emd(constant(5, 5, 0), constant(5, 5, 255)) == doctest::Approx(255.0));
}

TEST_CASE("entropy examples") {
  CHECK(entropy(constant(4, 4, 17)) == 0.0);
  CHECK(entropy(gray(2, 2, {0, 0, 255, 255})) == doctest::Approx(1.0));
  std::mt19937_64 rng(15);
  const GrayImage a = random_gray(rng, 6, 6);
  CHECK(entropy_delta(a, a) == 0.0);
}

TEST_CASE("pixel and statistical metrics agree with brute force") {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 50; ++t) {
    const int w = testing::rand_int(rng, 1, 8), h = testing::rand_int(rng, 1, 8);
    const GrayImage a = random_gray(rng, w, h), b = random_gray(rng, w, h);
    CHECK(oracle::rel_close(mse(a, b), oracle::mse(a.data, b.data)));
    CHECK(oracle::rel_close(psnr(a, b), oracle::psnr(oracle::mse(a.data, b.data))));
    CHECK(oracle::rel_close(mutual_information(a, b), oracle::mutual_information(a.data, b.data)));
    CHECK(oracle::rel_close(emd(a, b), oracle::emd(a.data, b.data)));
    CHECK(oracle::rel_close(entropy(a), oracle::entropy(a.data)));
  }
}

TEST_CASE("luma uses BT.601 weights") {
  Image8 px(1, 1, 3);
  px.at(0, 0, 0) = 255;
  CHECK(to_luma(px).data[0] == doctest::Approx(0.299 * 255));
  px.at(0, 0, 0) = 0;
  px.at(0, 0, 1) = 100;
  CHECK(to_luma(px).data[0] == doctest::Approx(58.7));
}

TEST_CASE("symmetry, ranges and the mutual information bound") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 40; ++t) {
    const int w = testing::rand_int(rng, 2, 8), h = testing::rand_int(rng, 2, 8);
    const GrayImage a = random_gray(rng, w, h), b = random_gray(rng, w, h);
    CHECK(mse(a, b) == mse(b, a));
    CHECK(oracle::rel_close(emd(a, b), emd(b, a)));
    CHECK(oracle::rel_close(mutual_information(a, b), mutual_information(b, a)));
    CHECK(mutual_information(a, b) <= std::min(entropy64(a), entropy64(b)) + 1e-12);
    CHECK(mutual_information(a, b) >= 0.0);
    const double c = ncc(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("JPEG degrades natural photographs monotonically") {
  std::size_t strict = 0, total = 0;
  for (const auto& entry : std::filesystem::directory_iterator(VALIMETRICS_TEST_DATA "/natural")) {
    const Image8 img = read_image(entry.path());
    const GrayImage l = to_luma(img);
    double last_ssim = 2, last_mse = -1;
    bool ok = true;
    for (int q : {90, 50, 30, 15, 5}) {
      const Image8 d = jpeg_round_trip(img, q).decoded;
      const double s = ssim(l, to_luma(d)), e = mse(img, d);
      ok = ok && s < last_ssim && e > last_mse;
      last_ssim = s;
      last_mse = e;
    }
    strict += ok;
    ++total;
  }
  CHECK(total == 50);
  CHECK(double(strict) >= 0.9 * double(total));
}
