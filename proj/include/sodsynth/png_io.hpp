#pragma once

#include <string>
#include <variant>

#include "sodsynth/image.hpp"

namespace sodsynth {

using LoadedPng = std::variant<RgbImage, GrayImage>;

/// Reads an 8-bit grayscale or RGB PNG. Alpha, palette, 16-bit and
/// interlaced files are rejected with an error naming the path.
LoadedPng load_png(const std::string& path);

/// Same, but requires the specific channel layout.
RgbImage load_png_rgb(const std::string& path);
GrayImage load_png_gray(const std::string& path);

/// Writes 8-bit PNGs. Values are clamped to [0,1] and quantized to k/255.
void save_png(const RgbImage& img, const std::string& path);
void save_png(const GrayImage& img, const std::string& path);
void save_png(const BinaryMask& mask, const std::string& path); // 0 / 255

} // namespace sodsynth
