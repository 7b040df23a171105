#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "automac/errors.hpp"
#include "automac/evaluation.hpp"
#include "automac/image_io.hpp"

namespace automac {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> px;

  Canvas(int width, int height, Rgb fill) : w(width), h(height), px(3u * width * height) {
    for (int i = 0; i < w * h; ++i) set_index(i, fill);
  }

  void set_index(int i, Rgb c) {
    px[3u * i + 0] = c.r;
    px[3u * i + 1] = c.g;
    px[3u * i + 2] = c.b;
  }

  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    set_index(y * w + x, c);
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y < std::min(h, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(w, x1); ++x) set(x, y, c);
  }

  void save(const std::string& path) const { write_png_rgb8(path, h, w, px); }
};

// 3x5 bitmap glyphs for the little numeric annotations
const std::uint16_t* glyph_for(char c) {
  // each glyph is five rows of three bits, top to bottom
  static const std::uint16_t digits[10][5] = {
      {0b111, 0b101, 0b101, 0b101, 0b111}, {0b010, 0b110, 0b010, 0b010, 0b111},
      {0b111, 0b001, 0b111, 0b100, 0b111}, {0b111, 0b001, 0b111, 0b001, 0b111},
      {0b101, 0b101, 0b111, 0b001, 0b001}, {0b111, 0b100, 0b111, 0b001, 0b111},
      {0b111, 0b100, 0b111, 0b101, 0b111}, {0b111, 0b001, 0b010, 0b010, 0b010},
      {0b111, 0b101, 0b111, 0b101, 0b111}, {0b111, 0b101, 0b111, 0b001, 0b111}};
  static const std::uint16_t dot[5] = {0b000, 0b000, 0b000, 0b000, 0b010};
  static const std::uint16_t minus[5] = {0b000, 0b000, 0b111, 0b000, 0b000};
  static const std::uint16_t blank[5] = {0b000, 0b000, 0b000, 0b000, 0b000};
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c == '.') return dot;
  if (c == '-') return minus;
  return blank;
}

void draw_text(Canvas& canvas, int x, int y, const std::string& text, Rgb color, int scale = 1) {
  int cx = x;
  for (char c : text) {
    const std::uint16_t* glyph = glyph_for(c);
    for (int row = 0; row < 5; ++row) {
      for (int col = 0; col < 3; ++col) {
        if (glyph[row] & (0b100 >> col)) {
          canvas.fill_rect(cx + col * scale, y + row * scale, cx + (col + 1) * scale,
                          y + (row + 1) * scale, color);
        }
      }
    }
    cx += 4 * scale;
  }
}

int text_width(const std::string& text, int scale) {
  return text.empty() ? 0 : (static_cast<int>(text.size()) * 4 - 1) * scale;
}

const Rgb kGradeColors[kNumGrades] = {
    {46, 134, 193},   // no motion: blue
    {241, 196, 15},   // subtle: amber
    {203, 67, 53},    // severe: red
};

std::string format_fixed(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

void render_confusion_png(const std::string& path, const ConfusionMatrix& cm) {
  const int cell = 72, margin = 18;
  Canvas canvas(margin * 2 + cell * kNumGrades, margin * 2 + cell * kNumGrades,
                {255, 255, 255});

  std::int64_t max_count = 1;
  for (const auto& row : cm.counts)
    for (auto v : row) max_count = std::max(max_count, v);

  for (int t = 0; t < kNumGrades; ++t) {
    for (int p = 0; p < kNumGrades; ++p) {
      const double frac = static_cast<double>(cm.counts[t][p]) / static_cast<double>(max_count);
      const auto shade = static_cast<std::uint8_t>(255.0 - 190.0 * frac);
      const int x0 = margin + p * cell, y0 = margin + t * cell;
      canvas.fill_rect(x0, y0, x0 + cell, y0 + cell, {shade, shade, 255});
      // thin grid line
      canvas.fill_rect(x0, y0, x0 + cell, y0 + 1, {60, 60, 60});
      canvas.fill_rect(x0, y0, x0 + 1, y0 + cell, {60, 60, 60});

      const std::string label = std::to_string(cm.counts[t][p]);
      const Rgb ink = frac > 0.55 ? Rgb{255, 255, 255} : Rgb{20, 20, 20};
      draw_text(canvas, x0 + (cell - text_width(label, 2)) / 2, y0 + cell / 2 - 5, label, ink, 2);
    }
  }
  const int edge = margin + kNumGrades * cell;
  canvas.fill_rect(margin, edge, edge + 1, edge + 1, {60, 60, 60});
  canvas.fill_rect(edge, margin, edge + 1, edge + 1, {60, 60, 60});
  canvas.save(path);
}

void render_scatter_png(const std::string& path,
                        const std::vector<std::array<double, 2>>& points,
                        const std::vector<MotionGrade>& labels) {
  if (points.size() != labels.size()) {
    throw ValidationError("scatter: points/labels length mismatch");
  }
  const int size = 480, margin = 24;
  Canvas canvas(size, size, {255, 255, 255});
  if (points.empty()) {
    canvas.save(path);
    return;
  }

  double lo0 = points[0][0], hi0 = points[0][0], lo1 = points[0][1], hi1 = points[0][1];
  for (const auto& p : points) {
    lo0 = std::min(lo0, p[0]);
    hi0 = std::max(hi0, p[0]);
    lo1 = std::min(lo1, p[1]);
    hi1 = std::max(hi1, p[1]);
  }
  const double span0 = std::max(hi0 - lo0, 1e-9);
  const double span1 = std::max(hi1 - lo1, 1e-9);

  for (std::size_t i = 0; i < points.size(); ++i) {
    const int x = margin + static_cast<int>((points[i][0] - lo0) / span0 * (size - 2 * margin));
    const int y = margin + static_cast<int>((points[i][1] - lo1) / span1 * (size - 2 * margin));
    const Rgb c = kGradeColors[static_cast<int>(labels[i])];
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) canvas.set(x + dx, y + dy, c);
  }
  canvas.save(path);
}

void render_distribution_png(const std::string& path, const MograsDistribution& dist) {
  const int width = 560, height = 360, margin = 36;
  Canvas canvas(width, height, {255, 255, 255});

  // y axis spans [-1, 1]
  const auto y_of = [&](double v) {
    return margin + static_cast<int>((1.0 - v) / 2.0 * (height - 2 * margin));
  };
  canvas.fill_rect(margin - 2, y_of(0.0), width - margin, y_of(0.0) + 1, {200, 200, 200});
  canvas.fill_rect(margin - 2, margin, margin - 1, height - margin, {60, 60, 60});

  const int group_width = (width - 2 * margin) / kNumGrades;
  const int box_width = group_width / 5;
  for (int truth = 0; truth < kNumGrades; ++truth) {
    const int group_x = margin + truth * group_width;
    for (int s = 0; s < kNumGrades; ++s) {
      const auto& cell = dist[truth][s];
      const int cx = group_x + (s + 1) * group_width / 4;
      const Rgb c = kGradeColors[s];
      canvas.fill_rect(cx - box_width / 2, y_of(cell.q3), cx + box_width / 2, y_of(cell.q1) + 1, c);
      canvas.fill_rect(cx - box_width / 2 - 2, y_of(cell.median), cx + box_width / 2 + 2,
                       y_of(cell.median) + 2, {20, 20, 20});
      const std::string label = format_fixed(cell.median, 2);
      draw_text(canvas, cx - text_width(label, 1) / 2, y_of(cell.q3) - 9, label, {20, 20, 20}, 1);
    }
    // group separator
    if (truth > 0) {
      canvas.fill_rect(group_x, margin, group_x + 1, height - margin, {230, 230, 230});
    }
  }
  canvas.save(path);
}

}  // namespace automac
