// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/common.hpp"

#include <optional>

namespace gsforge {

/// Pinhole camera with a world-to-camera rigid pose. Camera axes follow the
/// OpenCV convention: +x right, +y down, +z forward. Pixel (x, y) has its
/// center at image coordinate (x + 0.5, y + 0.5).
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat3 rotation = Mat3::Identity();  // world -> camera
    Vec3 translation = Vec3::Zero();   // world -> camera

    /// Throws ValidationError unless fx, fy > 0, size positive and the
    /// rotation is orthonormal with det +1 (tolerance 1e-9).
    void validate() const;

    [[nodiscard]] Mat3 intrinsics() const;
    [[nodiscard]] Mat3 intrinsics_inverse() const;
    [[nodiscard]] Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    [[nodiscard]] Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * (cam - translation); }
    [[nodiscard]] Vec3 center() const { return -rotation.transpose() * translation; }
    /// Camera-to-world orientation.
    [[nodiscard]] Quat orientation() const { return Quat(rotation.transpose()); }

    /// Image coordinates of a world point, or nullopt when z <= 0.
    [[nodiscard]] std::optional<Vec2> project(const Vec3& world) const;
    /// K^-1 * (u, v, 1): camera-space ray with unit z component.
    [[nodiscard]] Vec3 ray(double u, double v) const;
    /// Ray through the center of pixel (x, y).
    [[nodiscard]] Vec3 pixel_ray(int x, int y) const { return ray(x + 0.5, y + 0.5); }

    /// Intrinsics from field of view with the principal point at the image center.
    [[nodiscard]] static CameraModel from_fov(int width, int height, double fov_x, double fov_y);
    /// Sets the pose from a camera center and a camera-to-world orientation.
    void set_pose(const Vec3& position, const Quat& orientation);
    /// Points the camera at `target`; `up` is the approximate world up vector.
    void look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
};

}  // namespace gsforge
