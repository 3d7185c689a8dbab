// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/similarity.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace gsforge {

SimilarityTransform SimilarityTransform::operator*(const SimilarityTransform& o) const {
    return {rotation * o.rotation, scale * (rotation * o.translation) + translation, scale * o.scale};
}

SimilarityTransform SimilarityTransform::inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation) / scale, 1.0 / scale};
}

Mat4 SimilarityTransform::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = scale * rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

void SimilarityTransform::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale) || !translation.allFinite() || !rotation.allFinite()) {
        throw ValidationError("similarity transform needs a finite positive scale");
    }
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw ValidationError("similarity rotation is not a proper rotation");
    }
}

SimilarityFit fit_similarity(std::span<const Vec3> src, std::span<const Vec3> dst) {
    if (src.size() != dst.size()) {
        throw ValidationError("fit_similarity: source and target counts differ");
    }
    const std::size_t n = src.size();
    if (n < 4) {
        throw DegenerateError("fit_similarity: need at least 4 correspondences, got " + std::to_string(n));
    }
    Vec3 mu_src = Vec3::Zero();
    Vec3 mu_dst = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mu_src += src[i];
        mu_dst += dst[i];
    }
    mu_src /= static_cast<double>(n);
    mu_dst /= static_cast<double>(n);

    Mat3 cov = Mat3::Zero();      // target-source cross covariance
    Mat3 src_cov = Mat3::Zero();
    double src_var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 a = src[i] - mu_src;
        const Vec3 b = dst[i] - mu_dst;
        cov += b * a.transpose();
        src_cov += a * a.transpose();
        src_var += a.squaredNorm();
    }
    cov /= static_cast<double>(n);
    src_cov /= static_cast<double>(n);
    src_var /= static_cast<double>(n);

    const Eigen::JacobiSVD<Mat3> src_svd(src_cov);
    const Vec3 spread = src_svd.singularValues();
    if (!(spread[0] > 0.0) || spread[2] <= 1e-12 * spread[0]) {
        throw DegenerateError("fit_similarity: source points are coplanar or degenerate");
    }

    const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 signs = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        signs[2] = -1.0;
    }
    SimilarityTransform t;
    t.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
    t.scale = svd.singularValues().dot(signs) / src_var;
    t.translation = mu_dst - t.scale * (t.rotation * mu_src);
    return {t, std::sqrt(alignment_cost(t, src, dst) / static_cast<double>(n))};
}

double alignment_cost(const SimilarityTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst) {
    double cost = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        cost += (t.apply(src[i]) - dst[i]).squaredNorm();
    }
    return cost;
}

SimilarityTransform compose_relative(const SimilarityTransform& base, const Vec3& delta) {
    return {base.rotation, base.apply(delta), base.scale};
}

SimilarityTransform decompose_homogeneous(const Mat4& m) {
    if (!m.allFinite()) {
        throw ValidationError("decompose_homogeneous: non-finite matrix");
    }
    if ((m.bottomRows<1>() - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
        throw ValidationError("decompose_homogeneous: last row must be (0, 0, 0, 1)");
    }
    const Mat3 block = m.topLeftCorner<3, 3>();
    const double det = block.determinant();
    if (!(det > 0.0)) {
        throw ValidationError("decompose_homogeneous: block is singular or reflecting (det " + std::to_string(det) + ")");
    }
    const Vec3 norms = block.colwise().norm();
    const double mean_norm = norms.mean();
    for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) {
            if (std::abs(block.col(a).dot(block.col(b))) > 1e-6 * norms[a] * norms[b]) {
                throw ValidationError("decompose_homogeneous: shear (columns " + std::to_string(a) + " and " +
                                      std::to_string(b) + " are not orthogonal)");
            }
        }
    }
    for (int c = 0; c < 3; ++c) {
        if (std::abs(norms[c] - mean_norm) > 1e-6 * mean_norm) {
            std::ostringstream msg;
            msg << "decompose_homogeneous: non-uniform scale (column norms " << norms.transpose() << ")";
            throw ValidationError(msg.str());
        }
    }
    const double s = std::cbrt(det);
    return {block / s, m.topRightCorner<3, 1>(), s};
}

SimilarityTransform chain_object_transform(const SimilarityTransform& env_from_sim,
                                           const SimilarityTransform& sim_from_object,
                                           const SimilarityTransform& bbox) {
    return env_from_sim * sim_from_object * bbox;
}

CameraModel transform_camera(const CameraModel& camera, const SimilarityTransform& t) {
    CameraModel out = camera;
    const Vec3 center = t.apply(camera.center());
    out.rotation = camera.rotation * t.rotation.transpose();
    out.translation = -out.rotation * center;
    return out;
}

}  // namespace gsforge
