// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/sh_rotation.hpp"

#include "gsforge/splat.hpp"

#include <cmath>
#include <string>

// Band matrices are built with the Ivanic-Ruedenberg recurrence in the real
// basis without Condon-Shortley phase, then conjugated by the (-1)^m signs
// that the 3DGS basis carries.

namespace gsforge {

namespace {

using Bands = std::array<Eigen::MatrixXd, 4>;

double centered(const Eigen::MatrixXd& r, int i, int j) {
    const int off = static_cast<int>(r.rows() - 1) / 2;
    return r(i + off, j + off);
}

double kron(int a, int b) { return a == b ? 1.0 : 0.0; }

double p_term(int i, int a, int b, int l, const Bands& r) {
    const auto& r1 = r[1];
    const auto& prev = r[static_cast<std::size_t>(l - 1)];
    if (b == l) {
        return centered(r1, i, 1) * centered(prev, a, l - 1) - centered(r1, i, -1) * centered(prev, a, -l + 1);
    }
    if (b == -l) {
        return centered(r1, i, 1) * centered(prev, a, -l + 1) + centered(r1, i, -1) * centered(prev, a, l - 1);
    }
    return centered(r1, i, 0) * centered(prev, a, b);
}

double u_term(int m, int n, int l, const Bands& r) { return p_term(0, m, n, l, r); }

double v_term(int m, int n, int l, const Bands& r) {
    if (m == 0) {
        return p_term(1, 1, n, l, r) + p_term(-1, -1, n, l, r);
    }
    if (m > 0) {
        return p_term(1, m - 1, n, l, r) * std::sqrt(1.0 + kron(m, 1)) -
               p_term(-1, -m + 1, n, l, r) * (1.0 - kron(m, 1));
    }
    return p_term(1, m + 1, n, l, r) * (1.0 - kron(m, -1)) +
           p_term(-1, -m - 1, n, l, r) * std::sqrt(1.0 + kron(m, -1));
}

double w_term(int m, int n, int l, const Bands& r) {
    if (m > 0) {
        return p_term(1, m + 1, n, l, r) + p_term(-1, -m - 1, n, l, r);
    }
    if (m < 0) {
        return p_term(1, m - 1, n, l, r) - p_term(-1, -m + 1, n, l, r);
    }
    return 0.0;
}

Eigen::MatrixXd build_band(int l, const Bands& r) {
    Eigen::MatrixXd band(2 * l + 1, 2 * l + 1);
    for (int m = -l; m <= l; ++m) {
        for (int n = -l; n <= l; ++n) {
            const double d = kron(m, 0);
            const int am = std::abs(m);
            const double denom = std::abs(n) == l ? 2.0 * l * (2.0 * l - 1.0) : static_cast<double>((l + n) * (l - n));
            const double u = std::sqrt((l + m) * (l - m) / denom);
            const double v = 0.5 * std::sqrt((1.0 + d) * (l + am - 1.0) * (l + am) / denom) * (1.0 - 2.0 * d);
            const double w = -0.5 * std::sqrt(std::max(0.0, (l - am - 1.0) * (l - am)) / denom) * (1.0 - d);
            double value = 0.0;
            if (u != 0.0) {
                value += u * u_term(m, n, l, r);
            }
            if (v != 0.0) {
                value += v * v_term(m, n, l, r);
            }
            if (w != 0.0) {
                value += w * w_term(m, n, l, r);
            }
            band(m + l, n + l) = value;
        }
    }
    return band;
}

}  // namespace

ShRotation::ShRotation(const Mat3& rot, int max_degree) : max_degree_(max_degree) {
    if (max_degree < 0 || max_degree > kMaxShDegree) {
        throw ValidationError("SH rotation supports degrees 0.." + std::to_string(kMaxShDegree));
    }
    bands_[0] = Eigen::MatrixXd::Identity(1, 1);
    if (max_degree == 0) {
        return;
    }
    // Band 1 in (y, z, x) order is the rotation with permuted rows and columns.
    Eigen::MatrixXd r1(3, 3);
    constexpr int perm[3] = {1, 2, 0};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            r1(i, j) = rot(perm[i], perm[j]);
        }
    }
    bands_[1] = r1;
    for (int l = 2; l <= max_degree; ++l) {
        bands_[static_cast<std::size_t>(l)] = build_band(l, bands_);
    }
    for (int l = 1; l <= max_degree; ++l) {
        auto& b = bands_[static_cast<std::size_t>(l)];
        for (int i = 0; i < 2 * l + 1; ++i) {
            for (int j = 0; j < 2 * l + 1; ++j) {
                if (((i - l) + (j - l)) % 2 != 0) {
                    b(i, j) = -b(i, j);
                }
            }
        }
    }
}

void ShRotation::apply(std::span<Vec3> coeffs, int degree) const {
    if (degree > max_degree_) {
        throw ValidationError("SH rotation built for a lower degree");
    }
    if (coeffs.size() != static_cast<std::size_t>(sh_coeff_count(degree))) {
        throw ValidationError("rotate_sh: coefficient count does not match degree");
    }
    for (int l = 1; l <= degree; ++l) {
        const auto& d = bands_[static_cast<std::size_t>(l)];
        const int first = l * l;
        const int size = 2 * l + 1;
        Eigen::MatrixXd block(size, 3);
        for (int i = 0; i < size; ++i) {
            block.row(i) = coeffs[static_cast<std::size_t>(first + i)].transpose();
        }
        const Eigen::MatrixXd rotated = d * block;
        for (int i = 0; i < size; ++i) {
            coeffs[static_cast<std::size_t>(first + i)] = rotated.row(i).transpose();
        }
    }
}

std::vector<Vec3> rotate_sh(std::span<const Vec3> coeffs, int degree, const Mat3& rotation) {
    std::vector<Vec3> out(coeffs.begin(), coeffs.end());
    ShRotation(rotation, degree).apply(out, degree);
    return out;
}

}  // namespace gsforge
