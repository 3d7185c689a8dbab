// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/json_io.hpp"

#include <cmath>
#include <fstream>

namespace gsforge {

namespace {

template <typename F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

double number(const Json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number()) {
        throw ParseError(std::string("'") + key + "' must be a number");
    }
    return v.get<double>();
}

}  // namespace

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const Json& value, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << value.dump(2) << '\n';
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

Vec3 vec3_from_json(const Json& j) {
    return guarded("3-vector", [&] {
        if (!j.is_array() || j.size() != 3) {
            throw ParseError("expected a 3-element array, got " + j.dump());
        }
        const Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
        if (!v.allFinite()) {
            throw ParseError("non-finite vector " + j.dump());
        }
        return v;
    });
}

Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Quat quat_from_json(const Json& j) {
    return guarded("quaternion", [&] {
        if (!j.is_array() || j.size() != 4) {
            throw ParseError("expected a quaternion [w, x, y, z], got " + j.dump());
        }
        Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
        const double n = q.norm();
        if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-3) {
            throw ValidationError("quaternion is not unit length (norm " + std::to_string(n) + ")");
        }
        q.normalize();
        return q;
    });
}

Json to_json(const Quat& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

Mat3 rotation_from_json(const Json& j) {
    if (j.is_array() && j.size() == 4) {
        return quat_from_json(j).toRotationMatrix();
    }
    return guarded("rotation", [&] {
        if (!j.is_array() || j.size() != 3) {
            throw ParseError("rotation must be a quaternion or 3x3 rows, got " + j.dump());
        }
        Mat3 r;
        for (int i = 0; i < 3; ++i) {
            r.row(i) = vec3_from_json(j[static_cast<std::size_t>(i)]).transpose();
        }
        return r;
    });
}

CameraModel camera_from_json(const Json& j) {
    return guarded("camera", [&] {
        if (!j.is_object()) {
            throw ParseError("camera must be an object");
        }
        const int w = j.at("width").get<int>();
        const int h = j.at("height").get<int>();
        CameraModel cam;
        if (j.contains("fov_x")) {
            cam = CameraModel::from_fov(w, h, number(j, "fov_x"), number(j, "fov_y"));
        } else {
            cam.width = w;
            cam.height = h;
            cam.fx = number(j, "fx");
            cam.fy = number(j, "fy");
            cam.cx = j.contains("cx") ? number(j, "cx") : 0.5 * w;
            cam.cy = j.contains("cy") ? number(j, "cy") : 0.5 * h;
        }
        cam.set_pose(vec3_from_json(j.at("position")), quat_from_json(j.at("orientation")));
        cam.validate();
        return cam;
    });
}

Json to_json(const CameraModel& camera) {
    return {{"position", to_json(camera.center())},
            {"orientation", to_json(camera.orientation())},
            {"width", camera.width},
            {"height", camera.height},
            {"fx", camera.fx},
            {"fy", camera.fy},
            {"cx", camera.cx},
            {"cy", camera.cy}};
}

SimilarityTransform similarity_from_json(const Json& j) {
    return guarded("similarity transform", [&] {
        if (j.contains("matrix")) {
            Mat4 m;
            const auto& rows = j.at("matrix");
            if (!rows.is_array() || rows.size() != 4) {
                throw ParseError("'matrix' must have 4 rows");
            }
            for (std::size_t r = 0; r < 4; ++r) {
                if (!rows[r].is_array() || rows[r].size() != 4) {
                    throw ParseError("'matrix' rows must have 4 entries");
                }
                for (std::size_t c = 0; c < 4; ++c) {
                    m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c].get<double>();
                }
            }
            return decompose_homogeneous(m);
        }
        SimilarityTransform t;
        t.scale = j.contains("scale") ? number(j, "scale") : 1.0;
        t.rotation = j.contains("rotation") ? rotation_from_json(j.at("rotation")) : Mat3::Identity();
        t.translation = j.contains("translation") ? vec3_from_json(j.at("translation")) : Vec3::Zero();
        t.validate();
        return t;
    });
}

Json to_json(const SimilarityTransform& t) {
    Json rows = Json::array();
    for (int r = 0; r < 3; ++r) {
        rows.push_back(Json::array({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)}));
    }
    return {{"scale", t.scale}, {"rotation", rows}, {"translation", to_json(t.translation)}};
}

OrientedBoundingBox obb_from_json(const Json& j) {
    return guarded("bounding box", [&] {
        OrientedBoundingBox box;
        box.center = vec3_from_json(j.at("center"));
        box.rotation = j.contains("rotation") ? rotation_from_json(j.at("rotation")) : Mat3::Identity();
        box.half_extents = vec3_from_json(j.at("half_extents"));
        box.validate();
        return box;
    });
}

std::vector<Vec3> points_from_json(const Json& j) {
    return guarded("point list", [&] {
        const Json& arr = j.is_object() ? j.at("points") : j;
        if (!arr.is_array()) {
            throw ParseError("expected an array of points");
        }
        std::vector<Vec3> pts;
        for (const auto& p : arr) {
            pts.push_back(vec3_from_json(p));
        }
        return pts;
    });
}

RegionSpec region_from_json(const Json& j) {
    return guarded("region", [&] {
        RegionSpec r;
        for (const auto& p : j.at("polygon")) {
            if (!p.is_array() || p.size() != 2) {
                throw ParseError("polygon vertices must be [x, y]");
            }
            r.polygon.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
        r.z = j.contains("z") ? number(j, "z") : 0.0;
        return r;
    });
}

}  // namespace gsforge
