// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/image_io.hpp"

#include "gsforge/ply.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace gsforge {

namespace {

constexpr char kDepthMagic[4] = {'G', 'S', 'D', 'R'};
constexpr char kNormalMagic[4] = {'G', 'S', 'N', 'R'};

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_read_from_span(png_structp png, png_bytep data, png_size_t length) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size()) {
        png_error(png, "truncated PNG");
    }
    std::memcpy(data, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
    }
    return v;
}

}  // namespace

std::uint8_t to_u8(double v) {
    const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::vector<std::uint8_t> to_u8(const Image& img) {
    std::vector<std::uint8_t> out(img.data.size());
    std::transform(img.data.begin(), img.data.end(), out.begin(), [](double v) { return to_u8(v); });
    return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValidationError("PNG export needs 1 or 3 channels");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng initialisation failed");
    }
    std::vector<std::uint8_t> out;
    const auto samples = to_u8(img);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(samples.data() + static_cast<std::size_t>(y) * img.width * img.channels);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_write_to_vector, nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw ParseError("not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng initialisation failed");
    }
    ReadCursor cursor{bytes, 0};
    Image img;
    std::vector<std::uint8_t> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("PNG decoding failed");
    }
    png_set_read_fn(png, &cursor, png_read_from_span);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const auto w = static_cast<int>(png_get_image_width(png, info));
    const auto h = static_cast<int>(png_get_image_height(png, info));
    const auto rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * static_cast<std::size_t>(h));
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    img = Image(w, h, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = buffer[i] / 255.0;
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) { write_binary_file(path, encode_png(img)); }

Image read_png(const std::filesystem::path& path) { return decode_png(read_binary_file(path)); }

std::vector<std::uint8_t> encode_float_raster(const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValidationError("float raster needs 1 or 3 channels");
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + img.data.size() * 4);
    const char* magic = img.channels == 1 ? kDepthMagic : kNormalMagic;
    out.insert(out.end(), magic, magic + 4);
    put_u32(out, static_cast<std::uint32_t>(img.width));
    put_u32(out, static_cast<std::uint32_t>(img.height));
    put_u32(out, 0);
    for (double v : img.data) {
        const auto f = static_cast<float>(v);
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    return out;
}

Image decode_float_raster(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16) {
        throw ParseError("float raster: header truncated");
    }
    int channels = 0;
    if (std::memcmp(bytes.data(), kDepthMagic, 4) == 0) {
        channels = 1;
    } else if (std::memcmp(bytes.data(), kNormalMagic, 4) == 0) {
        channels = 3;
    } else {
        throw ParseError("float raster: bad magic");
    }
    const auto w = get_u32(bytes, 4);
    const auto h = get_u32(bytes, 8);
    const std::size_t count = static_cast<std::size_t>(w) * h * channels;
    if (w == 0 || h == 0 || bytes.size() != 16 + count * 4) {
        throw ParseError("float raster: size " + std::to_string(bytes.size()) + " does not match " +
                         std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(channels));
    }
    Image img(static_cast<int>(w), static_cast<int>(h), channels);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(bytes, 16 + 4 * i);
        float f = 0.0f;
        std::memcpy(&f, &bits, 4);
        img.data[i] = f;
    }
    return img;
}

void write_float_raster(const std::filesystem::path& path, const Image& img) {
    write_binary_file(path, encode_float_raster(img));
}

Image read_float_raster(const std::filesystem::path& path) { return decode_float_raster(read_binary_file(path)); }

}  // namespace gsforge
