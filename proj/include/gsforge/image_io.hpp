// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gsforge {

/// Float [0,1] -> 8 bit with rounding; values are clamped first.
[[nodiscard]] std::uint8_t to_u8(double v);
/// Interleaved 8-bit samples of a 1- or 3-channel image.
[[nodiscard]] std::vector<std::uint8_t> to_u8(const Image& img);

/// 8-bit RGB (3 channel) or grayscale (1 channel) PNG.
[[nodiscard]] std::vector<std::uint8_t> encode_png(const Image& img);
/// Decodes any 8-bit PNG into a 3-channel image in [0,1] (alpha dropped).
[[nodiscard]] Image decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image& img);
[[nodiscard]] Image read_png(const std::filesystem::path& path);

/// Float32 raster: 16-byte header {magic[4], width u32, height u32,
/// reserved u32 = 0} then row-major little-endian samples. Magic "GSDR" for
/// single-channel depth, "GSNR" for 3-channel normal maps.
[[nodiscard]] std::vector<std::uint8_t> encode_float_raster(const Image& img);
[[nodiscard]] Image decode_float_raster(std::span<const std::uint8_t> bytes);
void write_float_raster(const std::filesystem::path& path, const Image& img);
[[nodiscard]] Image read_float_raster(const std::filesystem::path& path);

}  // namespace gsforge
