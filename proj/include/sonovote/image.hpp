#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonovote/label.hpp"

namespace sonovote {

// Pixels are HWC row-major floats in [0,1]; channels is 1 (gray) or 3 (RGB).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, 0.0f) {
    if (h < 1 || w < 1 || (c != 1 && c != 3)) {
      throw std::invalid_argument("bad image dimensions");
    }
  }

  float& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct LabeledImage {
  Image image;
  ClassLabel label = ClassLabel::normal;
  std::string sample_id;
  std::string origin;
};

namespace detail {

// Rec. 601 luma.
inline float luminance(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

inline Image convert_channels(const Image& src, int channels) {
  if (channels == src.channels) return src;
  Image out(src.height, src.width, channels);
  const std::size_t n = static_cast<std::size_t>(src.height) * src.width;
  if (src.channels == 1 && channels == 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const float v = src.pixels[i];
      out.pixels[3 * i] = v;
      out.pixels[3 * i + 1] = v;
      out.pixels[3 * i + 2] = v;
    }
  } else if (src.channels == 3 && channels == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      out.pixels[i] = luminance(src.pixels[3 * i], src.pixels[3 * i + 1],
                                src.pixels[3 * i + 2]);
    }
  } else {
    throw std::invalid_argument("unsupported channel conversion");
  }
  return out;
}

}  // namespace detail

// Bilinear resize with half-pixel centers, then channel conversion
// (replication up, luminance down). Output stays within [0,1].
inline Image resize(const Image& src, int height, int width, int channels) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("resize target must be >= 1");
  }
  Image scaled(height, width, src.channels);
  const double sy_scale = static_cast<double>(src.height) / height;
  const double sx_scale = static_cast<double>(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double sy =
        std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx =
          std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - fx) + src.at(y0, x1, c) * fx;
        const double bot = src.at(y1, x0, c) * (1.0 - fx) + src.at(y1, x1, c) * fx;
        const double v = top * (1.0 - fy) + bot * fy;
        scaled.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return detail::convert_channels(scaled, channels);
}

inline LabeledImage resize(const LabeledImage& src, int height, int width,
                           int channels) {
  LabeledImage out = src;
  out.image = resize(src.image, height, width, channels);
  return out;
}

}  // namespace sonovote
