// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/sh.hpp"

#include "gsforge/splat.hpp"

#include <cmath>
#include <string>

namespace gsforge {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                          -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

}  // namespace

std::array<double, 16> sh_basis(int degree, const Vec3& d) {
    std::array<double, 16> y{};
    y[0] = kShC0;
    if (degree < 1) {
        return y;
    }
    const double x = d.x();
    const double yy = d.y();
    const double z = d.z();
    y[1] = -kC1 * yy;
    y[2] = kC1 * z;
    y[3] = -kC1 * x;
    if (degree < 2) {
        return y;
    }
    const double xx = x * x;
    const double y2 = yy * yy;
    const double zz = z * z;
    y[4] = kC2[0] * x * yy;
    y[5] = kC2[1] * yy * z;
    y[6] = kC2[2] * (2.0 * zz - xx - y2);
    y[7] = kC2[3] * x * z;
    y[8] = kC2[4] * (xx - y2);
    if (degree < 3) {
        return y;
    }
    y[9] = kC3[0] * yy * (3.0 * xx - y2);
    y[10] = kC3[1] * x * yy * z;
    y[11] = kC3[2] * yy * (4.0 * zz - xx - y2);
    y[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
    y[13] = kC3[4] * x * (4.0 * zz - xx - y2);
    y[14] = kC3[5] * z * (xx - y2);
    y[15] = kC3[6] * x * (xx - 3.0 * y2);
    return y;
}

Vec3 eval_sh(std::span<const Vec3> coeffs, int degree, const Vec3& unit_dir) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw ValidationError("unsupported SH degree " + std::to_string(degree));
    }
    if (coeffs.size() != static_cast<std::size_t>(sh_coeff_count(degree))) {
        throw ValidationError("SH degree " + std::to_string(degree) + " needs " +
                              std::to_string(sh_coeff_count(degree)) + " coefficients, got " +
                              std::to_string(coeffs.size()));
    }
    if (std::abs(unit_dir.norm() - 1.0) > 1e-6) {
        throw ValidationError("SH evaluation direction is not unit length");
    }
    const auto basis = sh_basis(degree, unit_dir);
    Vec3 rgb = Vec3::Constant(0.5);
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        rgb += basis[k] * coeffs[k];
    }
    return rgb;
}

}  // namespace gsforge
