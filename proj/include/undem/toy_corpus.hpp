#ifndef UNDEM_TOY_CORPUS_HPP
#define UNDEM_TOY_CORPUS_HPP

// Procedural corpus: clean scenes are smooth gradients with flat shapes; moire
// versions add a colored, phase-warped sinusoidal stripe field.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "undem/image.hpp"
#include "undem/image_io.hpp"

namespace undem {

struct ToyCorpusSpec {
  int train_moire = 24;
  int train_free = 24;
  int test_pairs = 8;
  int height = 192;
  int width = 256;
  double stripe_amplitude_min = 0.06;
  double stripe_amplitude_max = 0.18;
  std::uint64_t seed = 7;
};

inline Image make_toy_scene(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(height, width, 3);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = 0.15 + 0.7 * u(rng);
    c1[c] = 0.15 + 0.7 * u(rng);
  }
  const double angle = 2.0 * std::numbers::pi * u(rng);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double span = std::abs(dx) * width + std::abs(dy) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double t = ((x - width / 2.0) * dx + (y - height / 2.0) * dy) / span + 0.5;
      t = std::clamp(t, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(c0[c] + (c1[c] - c0[c]) * t);
    }
  }
  const int shapes = 3 + static_cast<int>(u(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = u(rng) < 0.5;
    const double cx = u(rng) * width, cy = u(rng) * height;
    const double rx = 12 + u(rng) * width / 5.0, ry = 12 + u(rng) * height / 5.0;
    double col[3];
    for (double& v : col) v = 0.1 + 0.8 * u(rng);
    const int y0 = std::max(0, static_cast<int>(cy - ry)), y1 = std::min(height - 1, static_cast<int>(cy + ry));
    const int x0 = std::max(0, static_cast<int>(cx - rx)), x1 = std::min(width - 1, static_cast<int>(cx + rx));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (ellipse) {
          const double ex = (x - cx) / rx, ey = (y - cy) / ry;
          if (ex * ex + ey * ey > 1.0) continue;
        }
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c]);
      }
    }
  }
  return img;
}

/// Adds a stripe field: per-channel phase-shifted sinusoid, radially warped
/// phase and a smooth amplitude envelope. Period 3-9 px, peak amplitude drawn
/// uniformly from [amp_min, amp_max].
inline Image add_toy_moire(const Image& clean, std::mt19937_64& rng, double amp_min = 0.06, double amp_max = 0.18) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double pi2 = 2.0 * std::numbers::pi;
  const double period = 3.0 + 6.0 * u(rng);
  const double theta = pi2 * u(rng);
  const double amp = amp_min + (amp_max - amp_min) * u(rng);
  const double color_shift = 0.4 + 1.6 * u(rng);  // radians between channels
  const double warp = (u(rng) - 0.5) * 0.004;
  const double phase0 = pi2 * u(rng);
  const double ecx = u(rng) * clean.width(), ecy = u(rng) * clean.height();
  const double ecx2 = u(rng) * clean.width(), ecy2 = u(rng) * clean.height();
  const double env_scale = 0.5 * (clean.width() + clean.height());
  Image out = clean;
  for (int y = 0; y < clean.height(); ++y) {
    for (int x = 0; x < clean.width(); ++x) {
      const double along = x * std::cos(theta) + y * std::sin(theta);
      const double r2 = (x - ecx2) * (x - ecx2) + (y - ecy2) * (y - ecy2);
      const double phase = pi2 * along / period + warp * r2 + phase0;
      const double d = std::hypot(x - ecx, y - ecy) / env_scale;
      const double env = 0.55 + 0.45 * std::cos(std::numbers::pi * std::min(d, 1.0));
      for (int c = 0; c < 3; ++c) {
        const double v = clean.at(c, y, x) + amp * env * std::sin(phase + c * color_shift);
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

/// Writes <root>/train/{moire,free} (unrelated scenes) and <root>/test/{moire,free}
/// (aligned pairs sharing a file name), 8-bit PNG.
inline void write_toy_corpus(const std::filesystem::path& root, const ToyCorpusSpec& spec) {
  namespace fs = std::filesystem;
  for (const char* d : {"train/moire", "train/free", "test/moire", "test/free"}) fs::create_directories(root / d);
  std::mt19937_64 rng(spec.seed);
  char name[32];
  for (int i = 0; i < spec.train_moire; ++i) {
    std::snprintf(name, sizeof name, "m%04d.png", i);
    const Image clean = make_toy_scene(spec.height, spec.width, rng);
    write_png8(root / "train/moire" / name, add_toy_moire(clean, rng, spec.stripe_amplitude_min, spec.stripe_amplitude_max));
  }
  for (int i = 0; i < spec.train_free; ++i) {
    std::snprintf(name, sizeof name, "f%04d.png", i);
    write_png8(root / "train/free" / name, make_toy_scene(spec.height, spec.width, rng));
  }
  for (int i = 0; i < spec.test_pairs; ++i) {
    std::snprintf(name, sizeof name, "t%04d.png", i);
    const Image clean = make_toy_scene(spec.height, spec.width, rng);
    write_png8(root / "test/free" / name, clean);
    write_png8(root / "test/moire" / name, add_toy_moire(clean, rng, spec.stripe_amplitude_min, spec.stripe_amplitude_max));
  }
}

}  // namespace undem

#endif  // UNDEM_TOY_CORPUS_HPP
