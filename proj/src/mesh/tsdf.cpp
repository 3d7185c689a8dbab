// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/mesh.hpp"

#include "gsforge/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gsforge {

TsdfVolume::TsdfVolume(const Vec3& origin, double voxel_size, const Vec3i& dims, double truncation)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims),
      truncation_(truncation > 0.0 ? truncation : 4.0 * voxel_size) {
    if (!origin.allFinite()) {
        throw ValidationError("TSDF origin must be finite");
    }
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
        throw ValidationError("TSDF voxel size must be positive");
    }
    if ((dims.array() <= 0).any()) {
        throw ValidationError("TSDF dims must be positive");
    }
    if (truncation_ < voxel_size_) {
        throw ValidationError("TSDF truncation must be at least one voxel");
    }
    const auto n = static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y()) *
                   static_cast<std::size_t>(dims.z());
    values_.assign(n, 1.0);
    weights_.assign(n, 0.0);
}

void TsdfVolume::set(int i, int j, int k, double value, double weight) {
    const auto idx = index(i, j, k);
    values_[idx] = std::clamp(value, -1.0, 1.0);
    weights_[idx] = weight;
}

void fuse_depth(TsdfVolume& volume, const Image& depth, const CameraModel& camera) {
    camera.validate();
    if (depth.channels != 1 || depth.width != camera.width || depth.height != camera.height) {
        throw ValidationError("fuse_depth: depth map is " + std::to_string(depth.width) + "x" +
                              std::to_string(depth.height) + "x" + std::to_string(depth.channels) +
                              ", camera expects " + std::to_string(camera.width) + "x" +
                              std::to_string(camera.height) + "x1");
    }
    const Vec3i dims = volume.dims();
    bool any_in_front = false;
    for (int c = 0; c < 8; ++c) {
        const Vec3 corner = volume.voxel_center((c & 1) ? dims.x() - 1 : 0, (c & 2) ? dims.y() - 1 : 0,
                                                (c & 4) ? dims.z() - 1 : 0);
        any_in_front = any_in_front || camera.to_camera(corner).z() > 0.0;
    }
    if (!any_in_front) {
        volume.add_warning();
        return;
    }

    const double trunc = volume.truncation();
    auto& values = volume.mutable_values();
    auto& weights = volume.mutable_weights();
    parallel_for(static_cast<std::size_t>(dims.z()), [&](std::size_t kz) {
        const int k = static_cast<int>(kz);
        for (int j = 0; j < dims.y(); ++j) {
            for (int i = 0; i < dims.x(); ++i) {
                const Vec3 pc = camera.to_camera(volume.voxel_center(i, j, k));
                if (pc.z() <= 0.0) {
                    continue;
                }
                const double u = camera.fx * pc.x() / pc.z() + camera.cx;
                const double v = camera.fy * pc.y() / pc.z() + camera.cy;
                if (!(u >= 0.0 && v >= 0.0 && u < camera.width && v < camera.height)) {
                    continue;
                }
                const double measured = depth.at(static_cast<int>(u), static_cast<int>(v));
                if (measured == kInvalidDepth || !std::isfinite(measured)) {
                    continue;
                }
                const double sdf = measured - pc.z();
                if (sdf < -trunc) {
                    continue;
                }
                const double tsdf = std::min(1.0, sdf / trunc);
                const auto idx = volume.index(i, j, k);
                const double w = weights[idx];
                values[idx] = (values[idx] * w + tsdf) / (w + 1.0);
                weights[idx] = w + 1.0;
            }
        }
    });
}

void fuse_scene_views(TsdfVolume& volume, const GaussianScene& scene, std::span<const CameraModel> cameras,
                      const DepthFusionOptions& options) {
    RenderOptions render_options;
    render_options.alpha_floor = options.min_alpha;
    render_options.grazing_epsilon = options.min_cos;
    for (const auto& cam : cameras) {
        fuse_depth(volume, render_depth_unbiased(scene, cam, render_options).depth, cam);
    }
}

}  // namespace gsforge
