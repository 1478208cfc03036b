#ifndef UNDEM_METRICS_HPP
#define UNDEM_METRICS_HPP

// PSNR, SSIM and an optional external perceptual scorer (LPIPS slot).

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "undem/image.hpp"

namespace undem {

inline constexpr double kPsnrCapDb = 100.0;

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

/// 10 log10(max^2 / MSE) over every channel, capped at 100 dB.
inline double psnr(const Image& a, const Image& b, double max_value = 1.0) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr of empty images");
  double se = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = static_cast<double>(va[i]) - static_cast<double>(vb[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(va.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(max_value * max_value / mse));
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

/// Separable 'valid' filtering of an h x w map; result is (h-k+1) x (w-k+1).
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

inline std::vector<double> luma_plane(const Image& img) {
  const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
  std::vector<double> y(n);
  if (img.channels() == 1) {
    for (std::size_t i = 0; i < n; ++i) y[i] = img.plane(0)[i];
    return y;
  }
  if (img.channels() != 3) throw std::invalid_argument("ssim expects 1 or 3 channels");
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 0.299 * img.plane(0)[i] + 0.587 * img.plane(1)[i] + 0.114 * img.plane(2)[i];
  }
  return y;
}

}  // namespace detail

/// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows of the luma plane,
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2.
inline double ssim(const Image& a, const Image& b, double dynamic_range = 1.0) {
  require_same_shape(a, b, "ssim");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    throw std::invalid_argument("ssim needs images of at least 11x11, got " + a.shape_str());
  }
  const int h = a.height();
  const int w = a.width();
  const auto ya = detail::luma_plane(a);
  const auto yb = detail::luma_plane(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto k = detail::gaussian_window(kSsimWindow, kSsimSigma);
  const auto mu_a = detail::filter_valid(ya, h, w, k);
  const auto mu_b = detail::filter_valid(yb, h, w, k);
  const auto e_aa = detail::filter_valid(aa, h, w, k);
  const auto e_bb = detail::filter_valid(bb, h, w, k);
  const auto e_ab = detail::filter_valid(ab, h, w, k);
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

struct MetricResult {
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
};

/// Image x image -> perceptual distance.
using PerceptualScorer = std::function<double(const Image&, const Image&)>;

class Evaluator {
 public:
  void register_perceptual_scorer(PerceptualScorer scorer) { scorer_ = std::move(scorer); }
  bool has_perceptual_scorer() const { return static_cast<bool>(scorer_); }

  /// `warning` receives a message when the perceptual scorer fails; lpips is then absent.
  MetricResult measure(const Image& restored, const Image& reference, std::string* warning = nullptr) const {
    MetricResult r{psnr(restored, reference), ssim(restored, reference), std::nullopt};
    if (scorer_) {
      try {
        r.lpips = scorer_(restored, reference);
      } catch (const std::exception& e) {
        if (warning) *warning = std::string("perceptual scorer failed: ") + e.what();
      } catch (...) {
        if (warning) *warning = "perceptual scorer failed";
      }
    }
    return r;
  }

 private:
  PerceptualScorer scorer_;
};

}  // namespace undem

#endif  // UNDEM_METRICS_HPP
