#ifndef UNDEM_IMAGE_HPP
#define UNDEM_IMAGE_HPP

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "undem/tensor.hpp"

namespace undem {

/// Planar (CHW) floating-point image, values nominally in [0, 1], RGB order.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 3, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {
    if (height < 0 || width < 0 || channels < 1) throw std::invalid_argument("bad image extent");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  std::string shape_str() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
  }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  float* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * height_ * width_; }
  const float* plane(int c) const { return data_.data() + static_cast<std::size_t>(c) * height_ * width_; }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  bool operator==(const Image& o) const = default;

  /// Copy of the rectangle [y0, y0+h) x [x0, x0+w).
  Image crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > height_ || x0 + w > width_) {
      throw std::out_of_range("crop window outside " + shape_str());
    }
    Image out(h, w, channels_);
    for (int c = 0; c < channels_; ++c) {
      for (int y = 0; y < h; ++y) {
        const float* src = plane(c) + static_cast<std::size_t>(y0 + y) * width_ + x0;
        std::copy_n(src, w, out.plane(c) + static_cast<std::size_t>(y) * w);
      }
    }
    return out;
  }

  bool in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
  }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

inline constexpr float kLumaR = 0.299f;
inline constexpr float kLumaG = 0.587f;
inline constexpr float kLumaB = 0.114f;

/// Single-channel luma 0.299 R + 0.587 G + 0.114 B.
inline Image luma(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  if (rgb.channels() != 3) throw std::invalid_argument("luma expects 1 or 3 channels");
  Image out(rgb.height(), rgb.width(), 1);
  const float* r = rgb.plane(0);
  const float* g = rgb.plane(1);
  const float* b = rgb.plane(2);
  float* y = out.plane(0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(rgb.height()) * rgb.width(); ++i) {
    y[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
  }
  return out;
}

/// 3x3 Laplacian [[0,1,0],[1,-4,1],[0,1,0]] of a single-channel image, replicate padding.
inline Image laplacian(const Image& gray) {
  if (gray.channels() != 1) throw std::invalid_argument("laplacian expects a single channel");
  const int h = gray.height();
  const int w = gray.width();
  Image out(h, w, 1);
  const float* s = gray.plane(0);
  float* d = out.plane(0);
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return s[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      d[static_cast<std::size_t>(y) * w + x] =
          px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1) - 4.0f * px(y, x);
    }
  }
  return out;
}

/// Images -> [N, C, H, W] tensor. All images must share a shape.
template <typename T>
Tensor<T> to_tensor(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: empty batch");
  const Image& first = images.front();
  Tensor<T> out(Shape{static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(first)) {
      throw std::invalid_argument("to_tensor: mixed shapes " + images[i].shape_str() + " vs " + first.shape_str());
    }
    std::transform(images[i].values().begin(), images[i].values().end(), out.sample(static_cast<int>(i)),
                   [](float v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  return to_tensor<T>(std::span<const Image>(&image, 1));
}

template <typename T>
Image from_tensor(const Tensor<T>& t, int index) {
  Image out(t.h(), t.w(), t.c());
  const T* src = t.sample(index);
  std::transform(src, src + out.size(), out.values().begin(), [](T v) { return static_cast<float>(v); });
  return out;
}

}  // namespace undem

#endif  // UNDEM_IMAGE_HPP
