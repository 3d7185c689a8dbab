// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/compose.hpp"

#include "gsforge/sh_rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsforge {

GaussianScene transform_scene(const GaussianScene& scene, const SimilarityTransform& t) {
    t.validate();
    const ShRotation sh_rot(t.rotation, scene.sh_degree());
    const Quat q(t.rotation);
    const double log_s = std::log(t.scale);
    std::vector<SplatRecord> out = scene.splats();
    for (auto& s : out) {
        s.mean = t.apply(s.mean);
        s.log_scale.array() += log_s;
        s.rotation = (q * s.rotation).normalized();
        sh_rot.apply(s.sh, scene.sh_degree());
    }
    return GaussianScene(std::move(out), scene.sh_degree(), scene.labels());
}

void OrientedBoundingBox::validate() const {
    if (!(half_extents.array() > 0.0).all()) {
        throw ValidationError("bounding box half extents must be positive");
    }
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw ValidationError("bounding box rotation is not orthonormal");
    }
}

bool OrientedBoundingBox::contains(const Vec3& p) const {
    const Vec3 local = rotation.transpose() * (p - center);
    return (local.cwiseAbs().array() <= half_extents.array()).all();
}

std::pair<GaussianScene, GaussianScene> crop_by_obb(const GaussianScene& scene, const OrientedBoundingBox& box) {
    box.validate();
    std::vector<SplatRecord> inside;
    std::vector<SplatRecord> outside;
    std::vector<std::string> in_labels;
    std::vector<std::string> out_labels;
    const auto& labels = scene.labels();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const bool in = box.contains(scene[i].mean);
        (in ? inside : outside).push_back(scene[i]);
        if (labels) {
            (in ? in_labels : out_labels).push_back((*labels)[i]);
        }
    }
    auto opt = [&](std::vector<std::string>& l) {
        return labels ? std::optional<std::vector<std::string>>(std::move(l)) : std::nullopt;
    };
    return {GaussianScene(std::move(inside), scene.sh_degree(), opt(in_labels)),
            GaussianScene(std::move(outside), scene.sh_degree(), opt(out_labels))};
}

GaussianScene merge_scenes(std::span<const GaussianScene> parts) {
    if (parts.empty()) {
        return GaussianScene({}, 0);
    }
    const int degree = parts.front().sh_degree();
    bool any_labels = false;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.sh_degree() != degree) {
            throw ValidationError("merge_scenes: SH degree mismatch (" + std::to_string(p.sh_degree()) + " vs " +
                                  std::to_string(degree) + ")");
        }
        any_labels = any_labels || p.labels().has_value();
        total += p.size();
    }
    std::vector<SplatRecord> splats;
    splats.reserve(total);
    std::vector<std::string> labels;
    for (const auto& p : parts) {
        splats.insert(splats.end(), p.splats().begin(), p.splats().end());
        if (any_labels) {
            if (p.labels()) {
                labels.insert(labels.end(), p.labels()->begin(), p.labels()->end());
            } else {
                labels.insert(labels.end(), p.size(), std::string());
            }
        }
    }
    return GaussianScene(std::move(splats), degree,
                         any_labels ? std::optional<std::vector<std::string>>(std::move(labels)) : std::nullopt);
}

std::string to_string(ConeColor c) {
    switch (c) {
        case ConeColor::red: return "red";
        case ConeColor::green: return "green";
        case ConeColor::blue: return "blue";
    }
    return "?";
}

std::string to_string(Region r) {
    switch (r) {
        case Region::left: return "left";
        case Region::middle: return "middle";
        case Region::right: return "right";
    }
    return "?";
}

ConeColor parse_cone_color(const std::string& s) {
    for (auto c : kConeColors) {
        if (to_string(c) == s) {
            return c;
        }
    }
    throw ParseError("unknown cone color '" + s + "'");
}

Vec3 color_command(ConeColor c) {
    switch (c) {
        case ConeColor::red: return Vec3::UnitX();
        case ConeColor::green: return Vec3::UnitY();
        case ConeColor::blue: return Vec3::UnitZ();
    }
    return Vec3::Zero();
}

const ConePlacement& PlacementSample::cone(ConeColor c) const {
    for (const auto& cone : cones) {
        if (cone.color == c) {
            return cone;
        }
    }
    throw ValidationError("placement has no " + to_string(c) + " cone");
}

Vec3 sample_region(std::mt19937_64& rng, const RegionSpec& region) {
    const auto& poly = region.polygon;
    if (poly.empty()) {
        throw ValidationError("placement region is empty");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> areas;
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        const Vec2 a = poly[i] - poly[0];
        const Vec2 b = poly[i + 1] - poly[0];
        areas.push_back(0.5 * std::abs(a.x() * b.y() - a.y() * b.x()));
    }
    const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
    if (!(total > 0.0)) {
        // Zero-area region: a point, or points along a segment.
        const Vec2 far = *std::max_element(poly.begin(), poly.end(), [&](const Vec2& a, const Vec2& b) {
            return (a - poly[0]).squaredNorm() < (b - poly[0]).squaredNorm();
        });
        const Vec2 p = far == poly[0] ? poly[0] : Vec2(poly[0] + unit(rng) * (far - poly[0]));
        return {p.x(), p.y(), region.z};
    }
    double pick = unit(rng) * total;
    std::size_t tri = 0;
    while (tri + 1 < areas.size() && pick > areas[tri]) {
        pick -= areas[tri];
        ++tri;
    }
    double u = unit(rng);
    double v = unit(rng);
    if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    const Vec2 p = poly[0] + u * (poly[tri + 1] - poly[0]) + v * (poly[tri + 2] - poly[0]);
    return {p.x(), p.y(), region.z};
}

PlacementSample sample_placement(std::mt19937_64& rng, const std::array<RegionSpec, 3>& cone_regions,
                                 const RobotSpawnSpec& robot) {
    if (robot.yaw_max < robot.yaw_min) {
        throw ValidationError("robot yaw range is inverted");
    }
    PlacementSample s;
    s.robot_position = sample_region(rng, robot.region);
    s.robot_yaw = robot.yaw_min == robot.yaw_max
                      ? robot.yaw_min
                      : std::uniform_real_distribution<double>(robot.yaw_min, robot.yaw_max)(rng);
    std::array<ConeColor, 3> colors = kConeColors;
    // Fisher-Yates with explicit draws so the stream is library independent.
    for (std::size_t i = colors.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, static_cast<int>(i))(rng));
        std::swap(colors[i], colors[j]);
    }
    for (std::size_t r = 0; r < 3; ++r) {
        s.cones[r] = {colors[r], kRegions[r], sample_region(rng, cone_regions[r])};
    }
    return s;
}

SimilarityTransform object_to_environment(const SimilarityTransform& env_from_sim, const SimilarityTransform& placement,
                                          const ObjectAsset& object) {
    return chain_object_transform(env_from_sim, placement * object.sim_from_object, object.bbox);
}

EpisodeScene instantiate_episode(const GaussianScene& env_scene, const std::map<ConeColor, ObjectAsset>& objects,
                                 const PlacementSample& placement, const SimilarityTransform& env_from_sim) {
    EpisodeScene ep;
    std::vector<GaussianScene> parts;
    parts.push_back(env_scene.labels() ? env_scene : env_scene.with_label("environment"));
    if (!objects.empty()) {
        for (const auto& cone : placement.cones) {
            const auto it = objects.find(cone.color);
            if (it == objects.end()) {
                throw ValidationError("instantiate_episode: no aligned asset for the " + to_string(cone.color) +
                                      " cone");
            }
            const auto t = object_to_environment(env_from_sim, SimilarityTransform::from_translation(cone.position),
                                                 it->second);
            parts.push_back(transform_scene(it->second.scene, t).with_label(to_string(cone.color)));
            ep.object_transforms[to_string(cone.color)] = t;
        }
    }
    ep.scene = merge_scenes(parts);
    return ep;
}

}  // namespace gsforge
