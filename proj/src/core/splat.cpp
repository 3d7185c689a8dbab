// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/splat.hpp"

#include <cmath>
#include <string>

namespace gsforge {

namespace {

constexpr double kQuatRenormTolerance = 1e-6;
constexpr double kQuatRejectTolerance = 1e-3;

bool all_finite(const SplatRecord& s) {
    if (!s.mean.allFinite() || !s.log_scale.allFinite() || !std::isfinite(s.opacity_logit) ||
        !s.rotation.coeffs().allFinite()) {
        return false;
    }
    for (const auto& c : s.sh) {
        if (!c.allFinite()) {
            return false;
        }
    }
    return true;
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double SplatRecord::opacity() const { return sigmoid(opacity_logit); }

Mat3 SplatRecord::covariance() const {
    const Mat3 r = rotation_matrix();
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    return r * s2.asDiagonal() * r.transpose();
}

int SplatRecord::shortest_axis() const {
    int axis = 0;
    for (int k = 1; k < 3; ++k) {
        if (log_scale[k] < log_scale[axis]) {
            axis = k;
        }
    }
    return axis;
}

Vec3 SplatRecord::shortest_axis_direction() const {
    return rotation_matrix().col(shortest_axis());
}

GaussianScene::GaussianScene(std::vector<SplatRecord> splats, int sh_degree,
                             std::optional<std::vector<std::string>> labels)
    : splats_(std::move(splats)), sh_degree_(sh_degree), labels_(std::move(labels)) {
    if (sh_degree_ < 0 || sh_degree_ > kMaxShDegree) {
        throw ValidationError("unsupported SH degree " + std::to_string(sh_degree_));
    }
    if (labels_ && labels_->size() != splats_.size()) {
        throw ValidationError("label count " + std::to_string(labels_->size()) +
                              " does not match splat count " + std::to_string(splats_.size()));
    }
    const auto expected = static_cast<std::size_t>(sh_coeff_count(sh_degree_));
    for (std::size_t i = 0; i < splats_.size(); ++i) {
        auto& s = splats_[i];
        if (s.sh.size() != expected) {
            throw ValidationError("splat " + std::to_string(i) + " has " + std::to_string(s.sh.size()) +
                                  " SH coefficients, expected " + std::to_string(expected));
        }
        if (!all_finite(s)) {
            throw ValidationError("splat " + std::to_string(i) + " has non-finite fields");
        }
        const double norm = s.rotation.norm();
        const double dev = std::abs(norm - 1.0);
        if (dev >= kQuatRejectTolerance) {
            throw ValidationError("splat " + std::to_string(i) + " quaternion norm " + std::to_string(norm) +
                                  " is not unit");
        }
        if (dev > kQuatRenormTolerance) {
            s.rotation.normalize();
        }
    }
}

GaussianScene GaussianScene::with_label(const std::string& label) const {
    return GaussianScene(splats_, sh_degree_, std::vector<std::string>(splats_.size(), label));
}

Vec3 GaussianScene::centroid() const {
    Vec3 sum = Vec3::Zero();
    for (const auto& s : splats_) {
        sum += s.mean;
    }
    return splats_.empty() ? sum : Vec3(sum / static_cast<double>(splats_.size()));
}

}  // namespace gsforge
