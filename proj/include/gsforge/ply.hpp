// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/splat.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gsforge {

/// Parses a binary little-endian 3DGS PLY. Properties are matched by name,
/// the SH degree is inferred from the number of f_rest_* properties, and
/// nx/ny/nz are read and discarded. Throws ParseError naming the offending
/// property or header line.
[[nodiscard]] GaussianScene load_ply(std::span<const std::uint8_t> bytes);

/// Serializes with canonical property order:
/// x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3 (all float32).
[[nodiscard]] std::vector<std::uint8_t> save_ply(const GaussianScene& scene);

[[nodiscard]] GaussianScene read_ply_file(const std::filesystem::path& path);
void write_ply_file(const std::filesystem::path& path, const GaussianScene& scene);

[[nodiscard]] std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace gsforge
