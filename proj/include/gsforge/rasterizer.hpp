// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/splat.hpp"

#include <optional>
#include <vector>

namespace gsforge {

/// Depth value written where no surface is defined.
inline constexpr double kInvalidDepth = 0.0;

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    /// Per-splat alpha below which a splat is ignored at a pixel.
    double alpha_cutoff = 1.0 / 255.0;
    /// Compositing stops once transmittance drops below this.
    double transmittance_stop = 1e-4;
    double alpha_clamp = 0.99;
    /// Depth, normal and plane maps are defined only where alpha exceeds this.
    double alpha_floor = 1e-3;
    /// Added to the diagonal of every projected covariance (px^2).
    double cov_regularization = 0.3;
    double near_plane = 0.01;
    /// Pixels whose unit ray meets the blended plane at |cos| below this get kInvalidDepth.
    double grazing_epsilon = 1e-6;
    /// Collapse each splat's shortest axis to zero before projecting.
    bool flatten_for_depth = false;

    void validate() const;
};

struct ProjectedSplat {
    Vec2 mean2d;       // image coordinates (pixels)
    Mat2 cov2d;        // regularized, symmetric positive definite
    double view_depth; // camera-space z of the mean
};

/// First-order perspective projection of a splat; nullopt when the mean
/// lies at or behind the near plane.
[[nodiscard]] std::optional<ProjectedSplat> project_splat(const SplatRecord& splat, const CameraModel& camera,
                                                          const RenderOptions& options = {});

struct RenderOutput {
    Image rgb;             // 3 channels, background composited
    Image alpha;           // 1 - final transmittance
    Image depth;           // unbiased ray-plane depth (camera z), kInvalidDepth where undefined
    Image plane_distance;  // alpha-normalized blend of per-splat plane distances
    Image normal;          // unit camera-space normals facing the camera, zero where undefined
    Image gray;            // 0.299 R + 0.587 G + 0.114 B
    Image mean_depth;      // baseline: blended center distance, taken along each pixel ray
};

[[nodiscard]] RenderOutput render(const GaussianScene& scene, const CameraModel& camera,
                                  const RenderOptions& options = {});

struct DepthMaps {
    Image depth;
    Image plane_distance;
    Image normal;
};

[[nodiscard]] DepthMaps render_depth_unbiased(const GaussianScene& scene, const CameraModel& camera,
                                              const RenderOptions& options = {});

/// One splat's share of a pixel, in compositing order.
struct PixelContribution {
    std::size_t splat_index;
    double alpha;          // clamped per-splat alpha at the pixel
    double transmittance;  // T before this splat
    [[nodiscard]] double weight() const { return alpha * transmittance; }
};

/// Compositing trace of a single pixel using exactly the renderer's kernel.
[[nodiscard]] std::vector<PixelContribution> trace_pixel(const GaussianScene& scene, const CameraModel& camera,
                                                         int x, int y, const RenderOptions& options = {});

[[nodiscard]] Image to_grayscale(const Image& rgb);

}  // namespace gsforge
