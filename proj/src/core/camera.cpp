// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/camera.hpp"

#include <cmath>

namespace gsforge {

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ValidationError("camera focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw ValidationError("camera image size must be positive");
    }
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw ValidationError("camera pose has non-finite entries");
    }
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw ValidationError("camera rotation is not a proper rotation");
    }
}

Mat3 CameraModel::intrinsics() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

Mat3 CameraModel::intrinsics_inverse() const {
    Mat3 k;
    k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return k;
}

std::optional<Vec2> CameraModel::project(const Vec3& world) const {
    const Vec3 p = to_camera(world);
    if (p.z() <= 0.0) {
        return std::nullopt;
    }
    return Vec2(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

Vec3 CameraModel::ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

CameraModel CameraModel::from_fov(int width, int height, double fov_x, double fov_y) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * width / std::tan(0.5 * fov_x);
    cam.fy = 0.5 * height / std::tan(0.5 * fov_y);
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

void CameraModel::set_pose(const Vec3& position, const Quat& orientation) {
    rotation = orientation.normalized().toRotationMatrix().transpose();
    translation = -rotation * position;
}

void CameraModel::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) {
        right = forward.unitOrthogonal();
    }
    right.normalize();
    const Vec3 down = forward.cross(right);
    Mat3 cam_to_world;
    cam_to_world.col(0) = right;
    cam_to_world.col(1) = down;
    cam_to_world.col(2) = forward;
    rotation = cam_to_world.transpose();
    translation = -rotation * eye;
}

}  // namespace gsforge
