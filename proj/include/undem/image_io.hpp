#ifndef UNDEM_IMAGE_IO_HPP
#define UNDEM_IMAGE_IO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "undem/error.hpp"
#include "undem/image.hpp"

namespace undem {

/// Decodes PNG/JPEG into RGB floats in [0, 1]. 8-bit data is divided by 255, 16-bit by 65535.
inline Image read_image(const std::filesystem::path& path) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (mat.empty()) throw DataError("cannot decode image " + path.string());
  double scale = 1.0;
  switch (mat.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw DataError("unsupported sample depth in " + path.string());
  }
  cv::Mat f;
  mat.convertTo(f, CV_32F, scale);
  Image out(f.rows, f.cols, 3);
  for (int y = 0; y < f.rows; ++y) {
    const auto* row = f.ptr<cv::Vec3f>(y);
    for (int x = 0; x < f.cols; ++x) {
      // OpenCV is BGR.
      out.at(0, y, x) = row[x][2];
      out.at(1, y, x) = row[x][1];
      out.at(2, y, x) = row[x][0];
    }
  }
  return out;
}

/// Lossless 16-bit PNG. 8-bit sources round-trip exactly (k/255 == 257k/65535).
inline void write_png16(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 3) throw std::invalid_argument("write_png16 expects RGB");
  cv::Mat mat(image.height(), image.width(), CV_16UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec<std::uint16_t, 3>>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint16_t>(std::lround(static_cast<double>(v) * 65535.0));
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 3});
  } catch (const cv::Exception& e) {
    throw DataError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw DataError("cannot write " + path.string());
}

/// 8-bit PNG, for toy corpora and previews.
inline void write_png8(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 3) throw std::invalid_argument("write_png8 expects RGB");
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(static_cast<double>(v) * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write " + path.string());
}

}  // namespace undem

#endif  // UNDEM_IMAGE_IO_HPP
