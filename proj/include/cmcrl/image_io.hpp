#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <string>

#include "cmcrl/common.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

/// Images are planar CHW float tensors, RGB, values in [0, 1].
using Image = Tensor<float>;

inline Image make_image(std::size_t size) { return Image({3, size, size}, 0.0f); }

/// Decode an image file to a square CHW float tensor. Grayscale inputs are
/// replicated to 3 channels, alpha is dropped, resizing is bilinear.
/// Returns an empty tensor when the file cannot be decoded.
inline Image decode_image(const std::string& path, std::size_t target_size) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) return Image();
  cv::Mat resized;
  if (bgr.cols == static_cast<int>(target_size) && bgr.rows == static_cast<int>(target_size)) {
    resized = bgr;
  } else {
    cv::resize(bgr, resized, cv::Size(static_cast<int>(target_size), static_cast<int>(target_size)),
               0.0, 0.0, cv::INTER_LINEAR);
  }
  Image img({3, target_size, target_size});
  for (std::size_t y = 0; y < target_size; ++y) {
    const auto* row = resized.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < target_size; ++x) {
      const cv::Vec3b px = row[x];  // BGR
      img.at(0, y, x) = static_cast<float>(px[2]) / 255.0f;
      img.at(1, y, x) = static_cast<float>(px[1]) / 255.0f;
      img.at(2, y, x) = static_cast<float>(px[0]) / 255.0f;
    }
  }
  return img;
}

/// Encode a CHW float image to an 8-bit PNG. Values are clamped to [0, 1]
/// and rounded to the nearest 8-bit level.
inline void encode_png(const Image& img, const std::string& path) {
  check_contract(img.rank() == 3 && img.dim(0) == 3, "encode_png: expected 3xHxW image");
  const int h = static_cast<int>(img.dim(1));
  const int w = static_cast<int>(img.dim(2));
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = img.at(static_cast<std::size_t>(c), static_cast<std::size_t>(y),
                         static_cast<std::size_t>(x));
        v = std::min(1.0f, std::max(0.0f, v));
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  if (!cv::imwrite(path, bgr)) throw io_error("failed to write image: " + path);
}

}  // namespace cmcrl
