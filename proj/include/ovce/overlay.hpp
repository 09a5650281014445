#pragma once

#include "ovce/bitmask.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ovce {

/// 8-bit RGBA image, row-major.
struct RgbaImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // 4 bytes per pixel

    friend bool operator==(const RgbaImage&, const RgbaImage&) = default;
};

/// Activation bits in blue, formula bits in orange, each at half opacity;
/// where both are set the colours mix at full opacity. Every pixel is
/// scaled up `scale` times.
RgbaImage render_overlay(const MaskView& activation, const MaskView& formula, int scale = 1);

/// Throws IoError on encoder failure.
std::string encode_png(const RgbaImage& img);
/// Throws ParseError on anything but an RGBA8 PNG.
RgbaImage decode_png(std::string_view bytes);

} // namespace ovce
