#include "pad/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace pad {

namespace {
uint8_t to_u8(float v) { return static_cast<uint8_t>(std::lround(clampf(v, 0.f, 1.f) * 255.f)); }
}  // namespace

void save_png(const Image& img, const std::string& path) {
  cv::Mat m;
  if (img.channels == 3) {
    m.create(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        // OpenCV stores BGR
        m.at<cv::Vec3b>(y, x) = {to_u8(img.at(x, y, 2)), to_u8(img.at(x, y, 1)), to_u8(img.at(x, y, 0))};
      }
  } else {
    m.create(img.h, img.w, CV_8UC1);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) m.at<uint8_t>(y, x) = to_u8(img.at(x, y, 0));
  }
  if (!cv::imwrite(path, m)) throw PadError("failed to write PNG: " + path);
}

Image load_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw PadError("failed to read PNG: " + path);
  Image img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      auto px = m.at<cv::Vec3b>(y, x);
      img.at(x, y, 0) = px[2] / 255.f;
      img.at(x, y, 1) = px[1] / 255.f;
      img.at(x, y, 2) = px[0] / 255.f;
    }
  return img;
}

Image load_png_gray(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw PadError("failed to read PNG: " + path);
  Image img(m.cols, m.rows, 1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) img.at(x, y, 0) = m.at<uint8_t>(y, x) / 255.f;
  return img;
}

void save_png16(const Image& map, const std::string& path, float scale) {
  cv::Mat m(map.h, map.w, CV_16UC1);
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x) {
      float v = map.at(x, y, 0) * scale;
      m.at<uint16_t>(y, x) = static_cast<uint16_t>(std::lround(clampf(v, 0.f, 65535.f)));
    }
  if (!cv::imwrite(path, m)) throw PadError("failed to write PNG: " + path);
}

Image load_score_map(const std::string& path, float scale) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty() || m.type() != CV_16UC1) throw PadError("failed to read 16-bit PNG: " + path);
  Image img(m.cols, m.rows, 1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) img.at(x, y, 0) = m.at<uint16_t>(y, x) / scale;
  return img;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  Image out(out_w, out_h, img.channels);
  const float sx = static_cast<float>(img.w) / out_w;
  const float sy = static_cast<float>(img.h) / out_h;
  for (int y = 0; y < out_h; ++y) {
    float fy = (y + 0.5f) * sy - 0.5f;
    int y0 = static_cast<int>(std::floor(fy));
    float wy = fy - y0;
    int y0c = std::clamp(y0, 0, img.h - 1), y1c = std::clamp(y0 + 1, 0, img.h - 1);
    for (int x = 0; x < out_w; ++x) {
      float fx = (x + 0.5f) * sx - 0.5f;
      int x0 = static_cast<int>(std::floor(fx));
      float wx = fx - x0;
      int x0c = std::clamp(x0, 0, img.w - 1), x1c = std::clamp(x0 + 1, 0, img.w - 1);
      for (int c = 0; c < img.channels; ++c) {
        float v00 = img.at(x0c, y0c, c), v10 = img.at(x1c, y0c, c);
        float v01 = img.at(x0c, y1c, c), v11 = img.at(x1c, y1c, c);
        out.at(x, y, c) = (1 - wy) * ((1 - wx) * v00 + wx * v10) + wy * ((1 - wx) * v01 + wx * v11);
      }
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, float sigma) {
  const int radius = static_cast<int>(std::ceil(3.f * sigma));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5f * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k = static_cast<float>(k / sum);

  Image tmp(img.w, img.h, img.channels);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * img.at(std::clamp(x + i, 0, img.w - 1), y, c);
        tmp.at(x, y, c) = acc;
      }
  Image out(img.w, img.h, img.channels);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, img.h - 1), c);
        out.at(x, y, c) = acc;
      }
  return out;
}

Image gradient_magnitude(const Image& img) {
  Image out(img.w, img.h, 1);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float gx = 0.5f * (img.luminance(std::min(x + 1, img.w - 1), y) -
                         img.luminance(std::max(x - 1, 0), y));
      float gy = 0.5f * (img.luminance(x, std::min(y + 1, img.h - 1)) -
                         img.luminance(x, std::max(y - 1, 0)));
      out.at(x, y, 0) = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

}  // namespace pad
