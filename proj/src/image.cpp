#include "automac/image.hpp"

#include <algorithm>

#include "automac/errors.hpp"

namespace automac {

bool all_finite(const ImageF& img) {
  for (float v : img.px) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

float sample_bilinear(const ImageF& img, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  auto clamp_at = [&](int yy, int xx) {
    yy = std::clamp(yy, 0, img.h - 1);
    xx = std::clamp(xx, 0, img.w - 1);
    return static_cast<double>(img.at(yy, xx));
  };
  const double v00 = clamp_at(y0, x0);
  const double v01 = clamp_at(y0, x0 + 1);
  const double v10 = clamp_at(y0 + 1, x0);
  const double v11 = clamp_at(y0 + 1, x0 + 1);
  const double top = v00 * (1.0 - fx) + v01 * fx;
  const double bot = v10 * (1.0 - fx) + v11 * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
  if (img.h <= 0 || img.w <= 0) throw ValidationError("resize_bilinear: empty image");
  ImageF out(out_h, out_w);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      out.at(y, x) = sample_bilinear(img, src_y, src_x);
    }
  }
  return out;
}

ImageF rigid_transform(const ImageF& img, double deg, double dx, double dy) {
  ImageF out(img.h, img.w);
  const double rad = deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double cy = (img.h - 1) * 0.5;
  const double cx = (img.w - 1) * 0.5;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      // inverse map: undo translation, then rotate back about the center
      const double py = y - dy - cy;
      const double px = x - dx - cx;
      const double src_y = c * py + s * px + cy;
      const double src_x = -s * py + c * px + cx;
      if (src_y < -0.5 || src_y > img.h - 0.5 || src_x < -0.5 || src_x > img.w - 0.5) {
        out.at(y, x) = 0.0f;
      } else {
        out.at(y, x) = sample_bilinear(img, src_y, src_x);
      }
    }
  }
  return out;
}

double mean_abs_diff(const ImageF& a, const ImageF& b) {
  if (a.h != b.h || a.w != b.w) throw ValidationError("mean_abs_diff: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) acc += std::abs(static_cast<double>(a.px[i]) - b.px[i]);
  return a.px.empty() ? 0.0 : acc / static_cast<double>(a.px.size());
}

float max_abs_diff(const ImageF& a, const ImageF& b) {
  if (a.h != b.h || a.w != b.w) throw ValidationError("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.px.size(); ++i) m = std::max(m, std::abs(a.px[i] - b.px[i]));
  return m;
}

}  // namespace automac
