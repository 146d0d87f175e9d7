#pragma once

#include <string>

#include "invreg/image.hpp"

namespace invreg {

/// 8-bit gray or RGB PNG, mapped linearly to [0, 1]. Gray+alpha and RGBA
/// files have their alpha dropped.
Image read_png(const std::string& path);

/// Writes 1- or 3-channel images; values are clamped to [0, 1] then scaled.
void write_png(const std::string& path, const Image& image);

/// Writes image scaled so its maximum maps to 255 (for occurrence maps).
void write_png_scaled(const std::string& path, const Image& image);

/// Raw dump: ASCII header line "m n c", then little-endian float32 samples in
/// row, column, channel order.
Image read_raw(const std::string& path);
void write_raw(const std::string& path, const Image& image);

/// Reads either format, choosing by extension (".png" or anything else raw).
Image read_image(const std::string& path);

SupportMask read_mask(const std::string& path);

}  // namespace invreg
