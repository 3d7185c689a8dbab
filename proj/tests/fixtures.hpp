// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

// Random generators and small scene builders shared by the test suites.

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/sh.hpp"
#include "gsforge/similarity.hpp"
#include "gsforge/splat.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace gsforge::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double normal(Rng& rng, double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng); }

inline Vec3 random_vec(Rng& rng, double lo, double hi) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Vec3 random_unit(Rng& rng) {
    Vec3 v;
    do {
        v = {normal(rng), normal(rng), normal(rng)};
    } while (v.norm() < 1e-6);
    return v.normalized();
}

inline Quat random_quat(Rng& rng) {
    Quat q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    return q;
}

inline Mat3 random_rotation(Rng& rng) { return random_quat(rng).toRotationMatrix(); }

inline std::vector<Vec3> random_sh(Rng& rng, int degree, double sigma = 0.3) {
    std::vector<Vec3> sh(static_cast<std::size_t>(sh_coeff_count(degree)));
    for (auto& c : sh) {
        c = {normal(rng, sigma), normal(rng, sigma), normal(rng, sigma)};
    }
    return sh;
}

inline SimilarityTransform random_similarity(Rng& rng, double s_lo = 0.3, double s_hi = 3.0) {
    return {random_rotation(rng), random_vec(rng, -2, 2), uniform(rng, s_lo, s_hi)};
}

inline SplatRecord random_splat(Rng& rng, int degree, const Vec3& lo, const Vec3& hi, double log_scale_lo = -3.5,
                                double log_scale_hi = -2.0) {
    SplatRecord s;
    s.mean = {uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()), uniform(rng, lo.z(), hi.z())};
    s.rotation = random_quat(rng);
    s.log_scale = random_vec(rng, log_scale_lo, log_scale_hi);
    s.opacity_logit = uniform(rng, -1.0, 4.0);
    s.sh = random_sh(rng, degree);
    s.sh[0] = rgb_to_sh_dc(random_vec(rng, 0.1, 0.9));
    return s;
}

inline GaussianScene random_scene(Rng& rng, std::size_t n, int degree, const Vec3& lo = Vec3::Constant(-1.0),
                                  const Vec3& hi = Vec3::Constant(1.0)) {
    std::vector<SplatRecord> splats;
    splats.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        splats.push_back(random_splat(rng, degree, lo, hi));
    }
    return GaussianScene(std::move(splats), degree);
}

/// Solid-colored splat with given scales (meters) and opacity.
inline SplatRecord solid_splat(const Vec3& mean, const Vec3& scales, double opacity, const Vec3& rgb,
                               const Quat& rot = Quat::Identity(), int degree = 0) {
    SplatRecord s;
    s.mean = mean;
    s.rotation = rot;
    s.log_scale = scales.array().log();
    s.opacity_logit = logit(opacity);
    s.sh.assign(static_cast<std::size_t>(sh_coeff_count(degree)), Vec3::Zero());
    s.sh[0] = rgb_to_sh_dc(rgb);
    return s;
}

/// Three stacked near-opaque planes at depth z facing the camera.
inline GaussianScene opaque_wall(double z, int degree) {
    std::vector<SplatRecord> layers;
    for (int i = 0; i < 3; ++i) {
        layers.push_back(solid_splat({0, 0, z + 0.001 * i}, Vec3(30, 30, 1e-4), 0.999, Vec3(0.8, 0.8, 0.8),
                                     Quat::Identity(), degree));
    }
    return GaussianScene(layers, degree);
}

/// Camera at the origin looking down +z with principal point at the image center.
inline CameraModel forward_camera(int w, int h, double f) {
    CameraModel cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * w;
    cam.cy = 0.5 * h;
    return cam;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

/// Flat opaque disks tangent to a sphere, placed on a Fibonacci lattice.
inline GaussianScene sphere_surface_scene(double radius, int count, double disk_sigma, const Vec3& center = Vec3::Zero()) {
    std::vector<SplatRecord> splats;
    splats.reserve(static_cast<std::size_t>(count));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(1.0 - z * z);
        const Vec3 n(r * std::cos(golden * i), r * std::sin(golden * i), z);
        const Quat q = Quat::FromTwoVectors(Vec3::UnitZ(), n);
        splats.push_back(solid_splat(center + radius * n, Vec3(disk_sigma, disk_sigma, 1e-5), 0.98,
                                     Vec3(0.5 + 0.4 * n.x(), 0.5, 0.5), q));
    }
    return GaussianScene(std::move(splats), 0);
}

/// Cameras on a Fibonacci sphere of the given distance, all looking at `target`.
inline std::vector<CameraModel> orbit_cameras(int count, double distance, int w, int h, double f,
                                              const Vec3& target = Vec3::Zero()) {
    std::vector<CameraModel> cams;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(1.0 - z * z);
        const Vec3 dir(r * std::cos(golden * i), r * std::sin(golden * i), z);
        CameraModel cam = forward_camera(w, h, f);
        const Vec3 up = std::abs(dir.z()) > 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
        cam.look_at(target + distance * dir, target, up);
        cams.push_back(cam);
    }
    return cams;
}

}  // namespace gsforge::testing
