// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/similarity.hpp"
#include "gsforge/splat.hpp"

#include <array>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gsforge {

/// Applies a similarity to every splat: mean' = sR mean + t,
/// log_scale' = log_scale + log s, rotation' = quat(R) * rotation, SH rotated
/// by the Wigner-D matrices of R. Opacity and labels are kept.
[[nodiscard]] GaussianScene transform_scene(const GaussianScene& scene, const SimilarityTransform& t);

struct OrientedBoundingBox {
    Vec3 center = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();  // box-local -> world
    Vec3 half_extents = Vec3::Ones();

    void validate() const;
    [[nodiscard]] bool contains(const Vec3& p) const;
};

/// Splits a scene by whether each splat mean lies inside the box.
[[nodiscard]] std::pair<GaussianScene, GaussianScene> crop_by_obb(const GaussianScene& scene,
                                                                  const OrientedBoundingBox& box);

/// Concatenates scenes in order. If any part carries labels the result does
/// too; unlabeled parts contribute empty labels. Degrees must match.
[[nodiscard]] GaussianScene merge_scenes(std::span<const GaussianScene> parts);

enum class ConeColor { red, green, blue };
enum class Region { left, middle, right };

inline constexpr std::array<ConeColor, 3> kConeColors = {ConeColor::red, ConeColor::green, ConeColor::blue};
inline constexpr std::array<Region, 3> kRegions = {Region::left, Region::middle, Region::right};

[[nodiscard]] std::string to_string(ConeColor c);
[[nodiscard]] std::string to_string(Region r);
[[nodiscard]] ConeColor parse_cone_color(const std::string& s);
/// Unit RGB command vector for a color, e.g. red -> (1, 0, 0).
[[nodiscard]] Vec3 color_command(ConeColor c);

/// Convex planar polygon at a fixed height. A single vertex denotes a point.
struct RegionSpec {
    std::vector<Vec2> polygon;
    double z = 0.0;
};

struct RobotSpawnSpec {
    RegionSpec region;
    double yaw_min = 0.0;
    double yaw_max = 0.0;
};

struct ConePlacement {
    ConeColor color = ConeColor::red;
    Region region = Region::left;
    Vec3 position = Vec3::Zero();
};

struct PlacementSample {
    Vec3 robot_position = Vec3::Zero();
    double robot_yaw = 0.0;
    std::array<ConePlacement, 3> cones;  // indexed by region

    [[nodiscard]] const ConePlacement& cone(ConeColor c) const;
};

/// Uniform point inside a convex polygon (fan triangulation weighted by area).
[[nodiscard]] Vec3 sample_region(std::mt19937_64& rng, const RegionSpec& region);

/// Robot pose uniform over its region and yaw range; a uniformly random
/// bijection of colors onto left/middle/right; cone positions uniform in
/// their regions. Throws ValidationError on an empty region.
[[nodiscard]] PlacementSample sample_placement(std::mt19937_64& rng, const std::array<RegionSpec, 3>& cone_regions,
                                               const RobotSpawnSpec& robot);

/// Reconstructed object plus the transforms that carry it into the simulator.
struct ObjectAsset {
    GaussianScene scene;                    // object COLMAP frame, already cropped
    SimilarityTransform sim_from_object;    // object COLMAP -> simulator
    SimilarityTransform bbox;               // box edit applied first
};

struct EpisodeScene {
    GaussianScene scene;
    /// object label -> object-COLMAP-to-environment transform, for moving
    /// the matching collision mesh identically.
    std::map<std::string, SimilarityTransform> object_transforms;
};

/// Pose of one object in the environment frame given its placement pose in
/// the simulator frame: env_from_sim * placement * sim_from_object * bbox.
[[nodiscard]] SimilarityTransform object_to_environment(const SimilarityTransform& env_from_sim,
                                                        const SimilarityTransform& placement,
                                                        const ObjectAsset& object);

/// Places each cone's object asset at its sampled position and merges
/// everything into the environment scene. Throws ValidationError when a
/// placed color has no asset.
[[nodiscard]] EpisodeScene instantiate_episode(const GaussianScene& env_scene,
                                               const std::map<ConeColor, ObjectAsset>& objects,
                                               const PlacementSample& placement,
                                               const SimilarityTransform& env_from_sim);

}  // namespace gsforge
