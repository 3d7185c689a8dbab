// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/common.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <vector>

namespace gsforge {

/// Real Wigner-D matrices for bands 0..3 in the basis used by sh_basis().
/// band(l) is (2l+1)x(2l+1) and maps coefficients c to c' such that the
/// rotated function satisfies f'(R d) = f(d).
class ShRotation {
  public:
    explicit ShRotation(const Mat3& rotation, int max_degree = 3);

    [[nodiscard]] const Eigen::MatrixXd& band(int l) const { return bands_[static_cast<std::size_t>(l)]; }
    [[nodiscard]] int max_degree() const { return max_degree_; }

    /// Rotates (degree+1)^2 RGB coefficients in place.
    void apply(std::span<Vec3> coeffs, int degree) const;

  private:
    int max_degree_;
    std::array<Eigen::MatrixXd, 4> bands_;
};

/// Rotates SH coefficients band by band, C'(l) = D_l(R) C(l).
[[nodiscard]] std::vector<Vec3> rotate_sh(std::span<const Vec3> coeffs, int degree, const Mat3& rotation);

}  // namespace gsforge
