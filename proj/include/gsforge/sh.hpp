// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/common.hpp"

#include <array>
#include <span>

namespace gsforge {

/// Band-0 normalization of the real SH basis (1 / (2 sqrt(pi))).
inline constexpr double kShC0 = 0.28209479177387814;

/// Real SH basis through degree 3 in the 3DGS ordering and sign convention
/// (Condon-Shortley phase included, m = -l..l within each band).
/// Entries beyond (degree+1)^2 are zero.
[[nodiscard]] std::array<double, 16> sh_basis(int degree, const Vec3& unit_dir);

/// View-dependent color: sum_k Y_k(dir) * coeffs[k] + 0.5 per channel.
/// Not clamped; the renderer clamps to >= 0. Throws ValidationError when
/// coeffs.size() != (degree+1)^2 or the direction is not unit length.
[[nodiscard]] Vec3 eval_sh(std::span<const Vec3> coeffs, int degree, const Vec3& unit_dir);

/// DC coefficient reproducing `rgb` from every direction.
[[nodiscard]] inline Vec3 rgb_to_sh_dc(const Vec3& rgb) { return (rgb.array() - 0.5) / kShC0; }

}  // namespace gsforge
