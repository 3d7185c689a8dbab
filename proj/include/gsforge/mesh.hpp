// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/common.hpp"
#include "gsforge/similarity.hpp"
#include "gsforge/splat.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsforge {

using Vec3i = Eigen::Vector3i;

/// Dense voxel grid of truncated signed distances. Values are stored as
/// distance / truncation in [-1, 1]; negative means behind the observed
/// surface. Voxel (i, j, k) is centered at origin + voxel_size * (i, j, k).
class TsdfVolume {
  public:
    TsdfVolume() = default;
    /// truncation <= 0 selects the default of four voxels.
    TsdfVolume(const Vec3& origin, double voxel_size, const Vec3i& dims, double truncation = 0.0);

    [[nodiscard]] const Vec3& origin() const { return origin_; }
    [[nodiscard]] double voxel_size() const { return voxel_size_; }
    [[nodiscard]] const Vec3i& dims() const { return dims_; }
    [[nodiscard]] double truncation() const { return truncation_; }
    [[nodiscard]] std::size_t voxel_count() const { return values_.size(); }

    [[nodiscard]] std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_.x()) * (static_cast<std::size_t>(j) +
                                                      static_cast<std::size_t>(dims_.y()) * static_cast<std::size_t>(k));
    }
    [[nodiscard]] Vec3 voxel_center(int i, int j, int k) const { return origin_ + voxel_size_ * Vec3(i, j, k); }

    [[nodiscard]] double value(int i, int j, int k) const { return values_[index(i, j, k)]; }
    [[nodiscard]] double weight(int i, int j, int k) const { return weights_[index(i, j, k)]; }
    /// Overwrites one voxel; the value is clamped to [-1, 1].
    void set(int i, int j, int k, double value, double weight);

    [[nodiscard]] const std::vector<double>& values() const { return values_; }
    [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& mutable_values() { return values_; }
    std::vector<double>& mutable_weights() { return weights_; }

    /// Frames skipped because the camera sees none of the volume.
    [[nodiscard]] std::size_t warning_count() const { return warnings_; }
    void add_warning() { ++warnings_; }

  private:
    Vec3 origin_ = Vec3::Zero();
    double voxel_size_ = 0.0;
    Vec3i dims_ = Vec3i::Zero();
    double truncation_ = 0.0;
    std::vector<double> values_;
    std::vector<double> weights_;
    std::size_t warnings_ = 0;
};

/// Integrates one camera-z depth map (kInvalidDepth pixels skipped). Each
/// voxel in front of the camera that projects onto a valid pixel receives
/// sdf = measured - voxel depth, clamped to the truncation band and averaged
/// with frame weight 1. Voxels further than the truncation behind the surface
/// are left untouched.
void fuse_depth(TsdfVolume& volume, const Image& depth, const CameraModel& camera);

struct DepthFusionOptions {
    /// Pixels with accumulated alpha at or below this carry no depth.
    double min_alpha = 0.5;
    /// Pixels whose ray meets the blended splat plane at |cos| below this are
    /// dropped; grazing planes put silhouette depths far off the surface.
    double min_cos = 0.3;
};

/// Renders unbiased depth for each camera and fuses it.
void fuse_scene_views(TsdfVolume& volume, const GaussianScene& scene, std::span<const CameraModel> cameras,
                      const DepthFusionOptions& options = {});

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<Vec3> normals;  // empty or one per vertex

    [[nodiscard]] bool empty() const { return triangles.empty(); }
    /// Throws ValidationError on out-of-range indices or non-finite vertices.
    void validate() const;
};

/// Marching cubes on the zero level set. Cells need positive weight at all
/// eight corners. Triangles wind counterclockwise seen from the positive side.
[[nodiscard]] TriangleMesh extract_mesh(const TsdfVolume& volume);

/// Area-weighted per-vertex normals.
void compute_vertex_normals(TriangleMesh& mesh);

/// True when every undirected edge is shared by exactly two triangles.
[[nodiscard]] bool is_watertight(const TriangleMesh& mesh);

[[nodiscard]] TriangleMesh transform_mesh(const TriangleMesh& mesh, const SimilarityTransform& t);

/// Uniform 2D grid over triangle footprints, built once per mesh.
class MeshHeightIndex {
  public:
    explicit MeshHeightIndex(TriangleMesh mesh, double cell_size = 0.0);

    /// Highest intersection of the vertical line through (x, y) with the mesh.
    [[nodiscard]] std::optional<double> height(double x, double y) const;
    [[nodiscard]] const TriangleMesh& mesh() const { return mesh_; }

  private:
    TriangleMesh mesh_;
    Vec2 lo_ = Vec2::Zero();
    double cell_ = 1.0;
    int nx_ = 0;
    int ny_ = 0;
    std::vector<std::vector<std::uint32_t>> cells_;
};

[[nodiscard]] std::optional<double> height_query(const MeshHeightIndex& index, double x, double y);

/// Binary STL; unindexed on read.
void write_stl(const TriangleMesh& mesh, const std::filesystem::path& path);
[[nodiscard]] TriangleMesh read_stl(const std::filesystem::path& path);
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
/// Reads v / vn / f records; polygons are fan triangulated.
[[nodiscard]] TriangleMesh read_obj(const std::filesystem::path& path);

/// Raw little-endian float32 values followed by float32 weights, x fastest,
/// plus a JSON sidecar at path + ".json".
void write_tsdf_checkpoint(const TsdfVolume& volume, const std::filesystem::path& raw_path);
[[nodiscard]] TsdfVolume read_tsdf_checkpoint(const std::filesystem::path& raw_path);

}  // namespace gsforge
