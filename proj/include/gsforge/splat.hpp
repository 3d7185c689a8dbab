// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/common.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsforge {

/// Number of SH coefficients per color channel for a given degree.
[[nodiscard]] constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

inline constexpr int kMaxShDegree = 3;

/// One Gaussian primitive. Opacity and scales are kept in their stored
/// (pre-activation) form; use the accessors for activated values.
struct SplatRecord {
    Vec3 mean = Vec3::Zero();
    Quat rotation = Quat::Identity();  // w, x, y, z
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    /// sh[k] holds the RGB triple for basis function k, k < (L+1)^2.
    std::vector<Vec3> sh;

    [[nodiscard]] double opacity() const;
    [[nodiscard]] Vec3 scale() const { return log_scale.array().exp(); }
    [[nodiscard]] Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    /// Sigma = R S S^T R^T.
    [[nodiscard]] Mat3 covariance() const;
    /// Index (0..2) of the shortest scale axis; lowest index wins ties.
    [[nodiscard]] int shortest_axis() const;
    /// World-space unit direction of the shortest axis (unoriented).
    [[nodiscard]] Vec3 shortest_axis_direction() const;
};

[[nodiscard]] double sigmoid(double x);
[[nodiscard]] double logit(double p);

/// Ordered, validated collection of splats sharing one SH degree.
/// Immutable once built; operations produce new scenes.
class GaussianScene {
  public:
    GaussianScene() = default;
    /// Validates every splat. Quaternions off unit norm by more than 1e-6
    /// but less than 1e-3 are renormalized; larger deviations are rejected.
    GaussianScene(std::vector<SplatRecord> splats, int sh_degree,
                  std::optional<std::vector<std::string>> labels = std::nullopt);

    [[nodiscard]] const std::vector<SplatRecord>& splats() const { return splats_; }
    [[nodiscard]] const SplatRecord& operator[](std::size_t i) const { return splats_[i]; }
    [[nodiscard]] std::size_t size() const { return splats_.size(); }
    [[nodiscard]] bool empty() const { return splats_.empty(); }
    [[nodiscard]] int sh_degree() const { return sh_degree_; }
    [[nodiscard]] const std::optional<std::vector<std::string>>& labels() const { return labels_; }

    /// Same splats with every label set to `label`.
    [[nodiscard]] GaussianScene with_label(const std::string& label) const;
    /// Mean of splat centers; zero for an empty scene.
    [[nodiscard]] Vec3 centroid() const;

  private:
    std::vector<SplatRecord> splats_;
    int sh_degree_ = 0;
    std::optional<std::vector<std::string>> labels_;
};

}  // namespace gsforge
