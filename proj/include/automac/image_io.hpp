#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "automac/image.hpp"

namespace automac {

// Raw float container: magic "AMAC", u32 H, u32 W, then H*W little-endian f32.
void write_amac(const std::string& path, const ImageF& img);
ImageF read_amac(const std::string& path);

// 16-bit grayscale PNG. Writing maps [min, max] linearly onto [0, 65535]
// (constant images become all zeros); reading returns the raw 16-bit values
// as floats. 8-bit grayscale inputs are widened on read.
void write_png16(const std::string& path, const ImageF& img);
ImageF read_png16(const std::string& path);

// Dispatch on extension: .amac or .png.
ImageF read_image(const std::string& path);
void write_image(const std::string& path, const ImageF& img);

// 8-bit RGB PNG, used by the figure renderers. `rgb` is h*w*3 bytes.
void write_png_rgb8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& rgb);

}  // namespace automac
