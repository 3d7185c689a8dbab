// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/common.hpp"

#include <span>

namespace gsforge {

/// x -> scale * rotation * x + translation.
struct SimilarityTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    [[nodiscard]] static SimilarityTransform identity() { return {}; }
    [[nodiscard]] static SimilarityTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t, 1.0}; }

    [[nodiscard]] Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
    /// this * other: apply `other` first.
    [[nodiscard]] SimilarityTransform operator*(const SimilarityTransform& other) const;
    [[nodiscard]] SimilarityTransform inverse() const;
    [[nodiscard]] Mat4 matrix() const;
    /// Throws ValidationError unless R is a proper rotation (1e-9) and scale > 0.
    void validate() const;
};

struct SimilarityFit {
    SimilarityTransform transform;
    /// sqrt(mean ||T(src_i) - dst_i||^2)
    double rms_residual = 0.0;
};

/// Closed-form least-squares similarity (Umeyama) mapping src onto dst.
/// Needs >= 4 correspondences with non-coplanar sources; throws
/// DegenerateError otherwise. Reflections are corrected by flipping the sign
/// of the smallest singular direction.
[[nodiscard]] SimilarityFit fit_similarity(std::span<const Vec3> src, std::span<const Vec3> dst);

/// Sum of squared alignment errors of `t` over the correspondences.
[[nodiscard]] double alignment_cost(const SimilarityTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst);

/// Pose of an object offset by `delta` in the frame of `base`: same rotation
/// and scale, translation = base(delta).
[[nodiscard]] SimilarityTransform compose_relative(const SimilarityTransform& base, const Vec3& delta);

/// Splits a 4x4 similarity into (R, t, s). The upper-left block must equal
/// s*R: equal column norms (1e-6 relative), orthogonal columns, det > 0.
[[nodiscard]] SimilarityTransform decompose_homogeneous(const Mat4& m);

/// Left-to-right product env_from_sim * sim_from_object * bbox.
[[nodiscard]] SimilarityTransform chain_object_transform(const SimilarityTransform& env_from_sim,
                                                         const SimilarityTransform& sim_from_object,
                                                         const SimilarityTransform& bbox);

/// Moves a camera along with a world similarity: the center maps through T
/// and the orientation composes with T's rotation. Intrinsics are kept.
[[nodiscard]] CameraModel transform_camera(const CameraModel& camera, const SimilarityTransform& t);

}  // namespace gsforge
