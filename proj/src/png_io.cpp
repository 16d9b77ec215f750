#include "sodsynth/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace sodsynth {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors through a C callback; we stash the message and
// longjmp back out (exceptions must not cross libpng's C frames).
struct PngErrCtx {
    std::string message;
};

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<PngErrCtx*>(png_get_error_ptr(png));
    if (ctx) ctx->message = msg;
    std::longjmp(png_jmpbuf(png), 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

inline std::uint8_t quantize(double v) {
    v = std::min(std::max(v, 0.0), 1.0);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

struct RawPng {
    int height = 0, width = 0, channels = 0;
    std::vector<std::uint8_t> bytes;
};

RawPng read_raw(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open PNG '" + path + "' for reading");

    PngErrCtx ctx;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_fn, png_warn_fn);
    if (!png) throw IoError("libpng init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed for '" + path + "'");
    }

    RawPng raw;
    std::vector<png_bytep> rows;
    auto fail = [&](const std::string& msg) -> IoError {
        png_destroy_read_struct(&png, &info, nullptr);
        return IoError(msg);
    };

    if (setjmp(png_jmpbuf(png)))
        throw fail("malformed PNG '" + path + "': " + ctx.message);

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    const int interlace = png_get_interlace_type(png, info);

    if (bit_depth != 8)
        throw fail("unsupported bit depth " + std::to_string(bit_depth) + " in '" + path +
                   "' (only 8-bit supported)");
    if (interlace != PNG_INTERLACE_NONE)
        throw fail("interlaced PNG '" + path + "' is not supported");
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)
        throw fail("unsupported PNG color type in '" + path +
                   "' (only 8-bit gray and RGB supported)");

    raw.height = static_cast<int>(h);
    raw.width = static_cast<int>(w);
    raw.channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    raw.bytes.resize(static_cast<std::size_t>(raw.height) * raw.width * raw.channels);

    const std::size_t row_bytes = static_cast<std::size_t>(raw.width) * raw.channels;
    if (png_get_rowbytes(png, info) != row_bytes)
        throw fail("unexpected row size in '" + path + "'");
    rows.resize(static_cast<std::size_t>(raw.height));
    for (int r = 0; r < raw.height; ++r)
        rows[static_cast<std::size_t>(r)] = raw.bytes.data() + r * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    png_destroy_read_struct(&png, &info, nullptr);
    return raw;
}

void write_raw(const std::string& path, int height, int width, int channels,
               const std::vector<std::uint8_t>& bytes) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open PNG '" + path + "' for writing");

    PngErrCtx ctx;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_fn, png_warn_fn);
    if (!png) throw IoError("libpng init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed for '" + path + "'");
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG '" + path + "': " + ctx.message);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t row_bytes = static_cast<std::size_t>(width) * channels;
    for (int r = 0; r < height; ++r)
        png_write_row(png, const_cast<png_bytep>(bytes.data() + r * row_bytes));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

} // namespace

LoadedPng load_png(const std::string& path) {
    RawPng raw = read_raw(path);
    if (raw.channels == 1) {
        GrayImage img(raw.height, raw.width);
        for (std::size_t i = 0; i < raw.bytes.size(); ++i) img.values[i] = raw.bytes[i] / 255.0;
        return img;
    }
    RgbImage img(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.bytes.size(); ++i) img.values[i] = raw.bytes[i] / 255.0;
    return img;
}

RgbImage load_png_rgb(const std::string& path) {
    LoadedPng loaded = load_png(path);
    if (auto* rgb = std::get_if<RgbImage>(&loaded)) return std::move(*rgb);
    throw IoError("expected RGB PNG at '" + path + "', found grayscale");
}

GrayImage load_png_gray(const std::string& path) {
    LoadedPng loaded = load_png(path);
    if (auto* gray = std::get_if<GrayImage>(&loaded)) return std::move(*gray);
    throw IoError("expected grayscale PNG at '" + path + "', found RGB");
}

void save_png(const RgbImage& img, const std::string& path) {
    std::vector<std::uint8_t> bytes(img.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.values[i]);
    write_raw(path, img.height, img.width, 3, bytes);
}

void save_png(const GrayImage& img, const std::string& path) {
    std::vector<std::uint8_t> bytes(img.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.values[i]);
    write_raw(path, img.height, img.width, 1, bytes);
}

void save_png(const BinaryMask& mask, const std::string& path) {
    std::vector<std::uint8_t> bytes(mask.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
    write_raw(path, mask.height, mask.width, 1, bytes);
}

} // namespace sodsynth
