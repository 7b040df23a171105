#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace automac {

// Row-major single-channel float image.
struct ImageF {
  int h = 0;
  int w = 0;
  std::vector<float> px;

  ImageF() = default;
  ImageF(int height, int width, float fill = 0.0f)
      : h(height), w(width), px(static_cast<std::size_t>(height) * width, fill) {}

  float& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
  float at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
  std::size_t size() const { return px.size(); }
};

bool all_finite(const ImageF& img);

// Bilinear sample with half-pixel centers; coordinates clamped to the border.
float sample_bilinear(const ImageF& img, double y, double x);

// Bilinear resize using the half-pixel-center convention, so a same-size
// resize is an exact identity.
ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);

// Rotate by `deg` about the image center, then translate by (dx, dy) pixels.
// Samples outside the source map to zero.
ImageF rigid_transform(const ImageF& img, double deg, double dx, double dy);

double mean_abs_diff(const ImageF& a, const ImageF& b);
float max_abs_diff(const ImageF& a, const ImageF& b);

}  // namespace automac
