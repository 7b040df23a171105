#include "automac/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "automac/errors.hpp"

namespace automac {

namespace {

void put_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated AMAC file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_amac(const std::string& path, const ImageF& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write("AMAC", 4);
  put_u32le(os, static_cast<std::uint32_t>(img.h));
  put_u32le(os, static_cast<std::uint32_t>(img.w));
  // x86 is little-endian; write floats directly
  os.write(reinterpret_cast<const char*>(img.px.data()),
           static_cast<std::streamsize>(img.px.size() * sizeof(float)));
  if (!os) throw DataError("write failed: " + path);
}

ImageF read_amac(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AMAC", 4) != 0) {
    throw DataError("not an AMAC file: " + path);
  }
  const std::uint32_t h = get_u32le(is, path);
  const std::uint32_t w = get_u32le(is, path);
  if (h == 0 || w == 0 || h > 1u << 16 || w > 1u << 16) {
    throw DataError("implausible AMAC dimensions in " + path);
  }
  ImageF img(static_cast<int>(h), static_cast<int>(w));
  if (!is.read(reinterpret_cast<char*>(img.px.data()),
               static_cast<std::streamsize>(img.px.size() * sizeof(float)))) {
    throw DataError("truncated AMAC file: " + path);
  }
  return img;
}

void write_png16(const std::string& path, const ImageF& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  float lo = img.px.empty() ? 0.0f : img.px[0];
  float hi = lo;
  for (float v : img.px) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double scale = (hi > lo) ? 65535.0 / (static_cast<double>(hi) - lo) : 0.0;

  std::vector<std::uint16_t> row(static_cast<std::size_t>(img.w));
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double v = (static_cast<double>(img.at(y, x)) - lo) * scale;
      const long q = std::lround(std::clamp(v, 0.0, 65535.0));
      const std::uint16_t u = static_cast<std::uint16_t>(q);
      // PNG is big-endian on the wire
      row[static_cast<std::size_t>(x)] = static_cast<std::uint16_t>((u >> 8) | (u << 8));
    }
    png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF read_png16(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("expected grayscale PNG: " + path);
  }
  if (depth < 16) {
    png_set_expand_gray_1_2_4_to_8(png);
    // widen 8-bit inputs so callers always see the 16-bit range
  }
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);

  ImageF img(static_cast<int>(h), static_cast<int>(w));
  if (depth == 16) {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 2);
    for (png_uint_32 y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (png_uint_32 x = 0; x < w; ++x) {
        const std::uint16_t v =
            static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
        img.at(static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(v);
      }
    }
  } else {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (png_uint_32 x = 0; x < w; ++x) {
        img.at(static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(row[x]) * 257.0f;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

ImageF read_image(const std::string& path) {
  if (ends_with(path, ".amac")) return read_amac(path);
  if (ends_with(path, ".png")) return read_png16(path);
  throw DataError("unsupported image format (expected .png or .amac): " + path);
}

void write_image(const std::string& path, const ImageF& img) {
  if (ends_with(path, ".amac")) return write_amac(path, img);
  if (ends_with(path, ".png")) return write_png16(path, img);
  throw DataError("unsupported image format (expected .png or .amac): " + path);
}

void write_png_rgb8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(h) * w * 3) throw DataError("rgb buffer size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * w * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace automac
