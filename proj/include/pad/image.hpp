#pragma once

#include <string>
#include <vector>

#include "pad/common.hpp"

namespace pad {

// Float image, interleaved channels, values nominally in [0, 1].
// channels == 3 for RGB renders, 1 for masks / score maps.
struct Image {
  int w = 0, h = 0, channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w_, int h_, int c, float fill = 0.f)
      : w(w_), h(h_), channels(c), data(static_cast<size_t>(w_) * h_ * c, fill) {}

  float& at(int x, int y, int c = 0) { return data[(static_cast<size_t>(y) * w + x) * channels + c]; }
  float at(int x, int y, int c = 0) const { return data[(static_cast<size_t>(y) * w + x) * channels + c]; }

  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(w) * h; }

  float luminance(int x, int y) const {
    if (channels == 1) return at(x, y, 0);
    return 0.2126f * at(x, y, 0) + 0.7152f * at(x, y, 1) + 0.0722f * at(x, y, 2);
  }
};

// PNG I/O. RGB images round-trip through 8-bit; masks through 8-bit single
// channel (0/255); score maps through 16-bit single channel with an explicit
// scale factor.
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);                     // 3-channel
Image load_png_gray(const std::string& path);                // 1-channel
void save_png16(const Image& map, const std::string& path, float scale);
// Inverse of save_png16: reads the 16-bit PNG and divides by scale.
Image load_score_map(const std::string& path, float scale);

Image resize_bilinear(const Image& img, int out_w, int out_h);
// Separable Gaussian blur, edge-clamped, kernel radius ceil(3*sigma).
Image gaussian_blur(const Image& img, float sigma);
// Central-difference gradient magnitude of the luminance channel.
Image gradient_magnitude(const Image& img);

inline float mse(const Image& a, const Image& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return static_cast<float>(acc / a.data.size());
}

inline float psnr(const Image& a, const Image& b) {
  float m = mse(a, b);
  if (m <= 0.f) return std::numeric_limits<float>::infinity();
  return -10.f * std::log10(m);
}

}  // namespace pad
