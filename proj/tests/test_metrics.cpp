#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "undem/metrics.hpp"

using namespace undem;
using undem::test::constant_image;
using undem::test::random_image;

namespace {

Image add_noise(const Image& img, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Image out = img;
  for (auto& v : out.values()) v = static_cast<float>(std::clamp(v + amplitude * u(rng), 0.0, 1.0));
  return out;
}

// Per-window SSIM with an explicit 2-D Gaussian, no separable filtering.
double ssim_oracle(const Image& a, const Image& b) {
  const int h = a.height(), w = a.width(), k = 11;
  auto y = [](const Image& img, int r, int c) {
    return 0.299 * img.at(0, r, c) + 0.587 * img.at(1, r, c) + 0.114 * img.at(2, r, c);
  };
  double g[11][11], total = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int n = 0;
  for (int r = 0; r + k <= h; ++r)
    for (int c = 0; c + k <= w; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double wt = g[i][j] / total, va = y(a, r + i, c + j), vb = y(b, r + i, c + j);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++n;
    }
  return acc / n;
}

}  // namespace

TEST(Psnr, UniformOneStepOffset) {
  std::mt19937_64 rng(1);
  Image a = random_image(32, 40, rng);
  for (auto& v : a.values()) v = std::round(v * 254.0f) / 255.0f;
  Image b = a;
  for (auto& v : b.values()) v += 1.0f / 255.0f;
  EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0), 0.01);
}

TEST(Psnr, IdenticalImagesAreCapped) {
  std::mt19937_64 rng(2);
  const Image a = random_image(8, 8, rng);
  EXPECT_EQ(psnr(a, a), kPsnrCapDb);
}

TEST(Psnr, ClosedFormMse) {
  // MSE 0.01 -> 20 dB.
  EXPECT_NEAR(psnr(constant_image(4, 4, 0.5f, 0.5f, 0.5f), constant_image(4, 4, 0.6f, 0.6f, 0.6f)), 20.0, 1e-5);
  EXPECT_NEAR(psnr(constant_image(4, 4, 0, 0, 0), constant_image(4, 4, 1, 1, 1)), 0.0, 1e-12);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  std::mt19937_64 rng(3);
  const Image clean = random_image(64, 64, rng);
  double prev = psnr(clean, clean);
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.15, 0.2}) {
    const double p = psnr(add_noise(clean, amp, 7), clean);
    EXPECT_LT(p, prev) << amp;
    prev = p;
  }
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(Image(4, 4, 3), Image(4, 5, 3)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(4);
  const Image a = random_image(24, 30, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  const Image flat = constant_image(16, 16, 0.3f, 0.3f, 0.3f);
  EXPECT_NEAR(ssim(flat, flat), 1.0, 1e-12);
}

TEST(Ssim, MatchesDirectWindowOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 4; ++t) {
    const Image a = random_image(19 + t, 23, rng);
    const Image b = add_noise(a, 0.05 * (t + 1), t);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-9);
  }
}

TEST(Ssim, InvertedImageScoresLow) {
  std::mt19937_64 rng(6);
  const Image a = random_image(32, 32, rng);
  Image inv = a;
  for (auto& v : inv.values()) v = 1.0f - v;
  EXPECT_LT(ssim(a, inv), 0.5);
}

TEST(Ssim, BoundedAndDecreasingWithNoise) {
  std::mt19937_64 rng(7);
  const Image clean = random_image(48, 48, rng);
  double prev = 1.0;
  for (double amp : {0.01, 0.05, 0.1, 0.2}) {
    const double s = ssim(add_noise(clean, amp, 3), clean);
    EXPECT_LE(s, prev);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    prev = s;
  }
  for (int t = 0; t < 20; ++t) {
    const double s = ssim(random_image(16, 16, rng), random_image(16, 16, rng));
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Metrics, ConstantShiftConsistency) {
  std::mt19937_64 rng(8);
  Image a = random_image(20, 20, rng), b = random_image(20, 20, rng);
  for (auto* img : {&a, &b})
    for (auto& v : img->values()) v = 0.25f + std::floor(v * 128.0f) / 256.0f;
  Image as = a, bs = b;
  // Multiples of 1/256 shift exactly.
  for (auto& v : as.values()) v += 0.125f;
  for (auto& v : bs.values()) v += 0.125f;
  EXPECT_EQ(psnr(a, b), psnr(as, bs));
  EXPECT_NEAR(ssim(a, b), ssim(as, bs), 1e-2);
  Image ac = a, bc = b;
  for (auto& v : ac.values()) v += 1e-4f;
  for (auto& v : bc.values()) v += 1e-4f;
  EXPECT_NEAR(ssim(a, b), ssim(ac, bc), 1e-6);
}

TEST(Ssim, RejectsSmallImages) {
  EXPECT_THROW(ssim(Image(10, 20, 3), Image(10, 20, 3)), std::invalid_argument);
}

TEST(Evaluator, PerceptualScorerPlugin) {
  std::mt19937_64 rng(9);
  const Image a = random_image(16, 16, rng);
  Evaluator e;
  EXPECT_FALSE(e.measure(a, a).lpips.has_value());
  e.register_perceptual_scorer([](const Image&, const Image&) { return 0.25; });
  EXPECT_EQ(e.measure(a, a).lpips.value(), 0.25);
  e.register_perceptual_scorer([](const Image&, const Image&) -> double { throw std::runtime_error("boom"); });
  std::string warning;
  const auto r = e.measure(a, a, &warning);
  EXPECT_FALSE(r.lpips.has_value());
  EXPECT_NE(warning.find("boom"), std::string::npos);
  EXPECT_NEAR(r.ssim, 1.0, 1e-12);
}
