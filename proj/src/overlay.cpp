#include "ovce/overlay.hpp"

#include "ovce/error.hpp"

#include <png.h>

#include <cstring>

namespace ovce {

namespace {

constexpr std::uint8_t kActivation[4] = {30, 144, 255, 128};
constexpr std::uint8_t kFormula[4] = {255, 140, 0, 128};
constexpr std::uint8_t kBoth[4] = {143, 142, 128, 255};

void png_append(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
    std::string_view bytes;
    std::size_t pos = 0;
};

void png_consume(png_structp png, png_bytep data, png_size_t len) {
    auto* c = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (c->pos + len > c->bytes.size()) png_error(png, "truncated PNG");
    std::memcpy(data, c->bytes.data() + c->pos, len);
    c->pos += len;
}

} // namespace

RgbaImage render_overlay(const MaskView& activation, const MaskView& formula, int scale) {
    if (activation.width != formula.width || activation.height != formula.height)
        throw ShapeMismatch("overlay layers differ in size");
    if (scale < 1) throw ShapeMismatch("overlay scale must be positive");
    RgbaImage img;
    img.width = activation.width * scale;
    img.height = activation.height * scale;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 4, 0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const bool a = activation.get(x / scale, y / scale), f = formula.get(x / scale, y / scale);
            const std::uint8_t* c = a && f ? kBoth : a ? kActivation : f ? kFormula : nullptr;
            if (c) std::memcpy(&img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 4], c, 4);
        }
    }
    return img;
}

std::string encode_png(const RgbaImage& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw IoError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_append, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(&img.pixels[static_cast<std::size_t>(y) * img.width * 4]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

RgbaImage decode_png(std::string_view bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
        throw ParseError("not a PNG");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{bytes};
    RgbaImage img;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw ParseError("corrupt PNG");
    }
    png_set_read_fn(png, &cursor, png_consume);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGBA || png_get_bit_depth(png, info) != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("expected an 8-bit RGBA PNG");
    }
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 4);
    for (int y = 0; y < img.height; ++y)
        png_read_row(png, &img.pixels[static_cast<std::size_t>(y) * img.width * 4], nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

} // namespace ovce
