// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

// JSON forms of the shared value types. Vectors are arrays [x, y, z];
// quaternions are [w, x, y, z].
//
// Camera:     {"position": [..], "orientation": [w,x,y,z] camera-to-world,
//              "width": W, "height": H,
//              "fx", "fy", "cx", "cy"  or  "fov_x", "fov_y" (radians)}
// Similarity: {"scale": s, "rotation": [w,x,y,z] or 3x3 rows, "translation": [..]}
//             or {"matrix": 4x4 rows}
// Box:        {"center": [..], "rotation": [w,x,y,z] or 3x3 rows, "half_extents": [..]}

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/compose.hpp"
#include "gsforge/similarity.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace gsforge {

using Json = nlohmann::json;

/// Parses a file; throws ParseError with the path on malformed JSON.
[[nodiscard]] Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& value, const std::filesystem::path& path);

[[nodiscard]] Vec3 vec3_from_json(const Json& j);
[[nodiscard]] Json to_json(const Vec3& v);
[[nodiscard]] Quat quat_from_json(const Json& j);
[[nodiscard]] Json to_json(const Quat& q);
/// Accepts a quaternion or a 3x3 row-major matrix.
[[nodiscard]] Mat3 rotation_from_json(const Json& j);

[[nodiscard]] CameraModel camera_from_json(const Json& j);
[[nodiscard]] Json to_json(const CameraModel& camera);

[[nodiscard]] SimilarityTransform similarity_from_json(const Json& j);
[[nodiscard]] Json to_json(const SimilarityTransform& t);

[[nodiscard]] OrientedBoundingBox obb_from_json(const Json& j);

/// Array of points, or an object with a "points" array.
[[nodiscard]] std::vector<Vec3> points_from_json(const Json& j);

/// {"polygon": [[x, y], ...], "z": z}
[[nodiscard]] RegionSpec region_from_json(const Json& j);

}  // namespace gsforge
