// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/mesh.hpp"

#include "gsforge/ply.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace gsforge {

static_assert(std::endian::native == std::endian::little, "binary mesh IO assumes a little-endian host");

void TriangleMesh::validate() const {
    for (const auto& v : vertices) {
        if (!v.allFinite()) {
            throw ValidationError("mesh has a non-finite vertex");
        }
    }
    for (const auto& t : triangles) {
        for (auto i : t) {
            if (i >= vertices.size()) {
                throw ValidationError("mesh triangle index " + std::to_string(i) + " out of range");
            }
        }
    }
    if (!normals.empty() && normals.size() != vertices.size()) {
        throw ValidationError("mesh normals must be empty or one per vertex");
    }
}

void compute_vertex_normals(TriangleMesh& mesh) {
    mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
    for (const auto& t : mesh.triangles) {
        const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
        for (auto i : t) {
            mesh.normals[i] += n;
        }
    }
    for (auto& n : mesh.normals) {
        const double len = n.norm();
        n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }
}

bool is_watertight(const TriangleMesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
    for (const auto& t : mesh.triangles) {
        for (int e = 0; e < 3; ++e) {
            const auto a = t[static_cast<std::size_t>(e)];
            const auto b = t[static_cast<std::size_t>((e + 1) % 3)];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    }
    return std::all_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 2; });
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const SimilarityTransform& t) {
    t.validate();
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) {
        v = t.apply(v);
    }
    for (auto& n : out.normals) {
        n = t.rotation * n;
    }
    return out;
}

MeshHeightIndex::MeshHeightIndex(TriangleMesh mesh, double cell_size) : mesh_(std::move(mesh)) {
    mesh_.validate();
    if (mesh_.triangles.empty()) {
        return;
    }
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    double extent = 0.0;
    for (const auto& t : mesh_.triangles) {
        Vec2 tlo = Vec2::Constant(std::numeric_limits<double>::infinity());
        Vec2 thi = -tlo;
        for (auto i : t) {
            tlo = tlo.cwiseMin(mesh_.vertices[i].head<2>());
            thi = thi.cwiseMax(mesh_.vertices[i].head<2>());
        }
        lo = lo.cwiseMin(tlo);
        hi = hi.cwiseMax(thi);
        extent += (thi - tlo).maxCoeff();
    }
    if (cell_size <= 0.0) {
        cell_size = std::max(2.0 * extent / static_cast<double>(mesh_.triangles.size()), 1e-6);
    }
    // Keep the grid bounded for very large, sparse meshes.
    const double span = (hi - lo).maxCoeff();
    cell_size = std::max(cell_size, span / 2048.0);
    cell_ = cell_size;
    lo_ = lo;
    nx_ = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / cell_)) + 1);
    ny_ = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / cell_)) + 1);
    cells_.resize(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_));
    for (std::uint32_t ti = 0; ti < mesh_.triangles.size(); ++ti) {
        Vec2 tlo = Vec2::Constant(std::numeric_limits<double>::infinity());
        Vec2 thi = -tlo;
        for (auto i : mesh_.triangles[ti]) {
            tlo = tlo.cwiseMin(mesh_.vertices[i].head<2>());
            thi = thi.cwiseMax(mesh_.vertices[i].head<2>());
        }
        const int x0 = static_cast<int>((tlo.x() - lo_.x()) / cell_);
        const int x1 = std::min(nx_ - 1, static_cast<int>((thi.x() - lo_.x()) / cell_));
        const int y0 = static_cast<int>((tlo.y() - lo_.y()) / cell_);
        const int y1 = std::min(ny_ - 1, static_cast<int>((thi.y() - lo_.y()) / cell_));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                cells_[static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x)]
                    .push_back(ti);
            }
        }
    }
}

std::optional<double> MeshHeightIndex::height(double x, double y) const {
    if (cells_.empty()) {
        return std::nullopt;
    }
    const double fx = (x - lo_.x()) / cell_;
    const double fy = (y - lo_.y()) / cell_;
    if (!(fx >= 0.0 && fy >= 0.0 && fx < nx_ && fy < ny_)) {
        return std::nullopt;
    }
    const auto& cell =
        cells_[static_cast<std::size_t>(fy) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(fx)];
    std::optional<double> best;
    const Vec2 p(x, y);
    for (auto ti : cell) {
        const auto& t = mesh_.triangles[ti];
        const Vec3& a = mesh_.vertices[t[0]];
        const Vec3& b = mesh_.vertices[t[1]];
        const Vec3& c = mesh_.vertices[t[2]];
        const Vec2 e1 = (b - a).head<2>();
        const Vec2 e2 = (c - a).head<2>();
        const double det = e1.x() * e2.y() - e1.y() * e2.x();
        if (std::abs(det) < 1e-15) {
            continue;  // vertical triangle: no unique height
        }
        const Vec2 d = p - a.head<2>();
        const double u = (d.x() * e2.y() - d.y() * e2.x()) / det;
        const double v = (e1.x() * d.y() - e1.y() * d.x()) / det;
        constexpr double tol = 1e-12;
        if (u < -tol || v < -tol || u + v > 1.0 + tol) {
            continue;
        }
        const double z = a.z() + u * (b.z() - a.z()) + v * (c.z() - a.z());
        if (!best || z > *best) {
            best = z;
        }
    }
    return best;
}

std::optional<double> height_query(const MeshHeightIndex& index, double x, double y) { return index.height(x, y); }

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) {
        throw ParseError("unexpected end of binary data at byte " + std::to_string(pos));
    }
    T value;
    std::memcpy(&value, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace

void write_stl(const TriangleMesh& mesh, const std::filesystem::path& path) {
    mesh.validate();
    std::vector<std::uint8_t> out(80, 0);
    const char banner[] = "gsforge binary STL";
    std::memcpy(out.data(), banner, sizeof(banner) - 1);
    put(out, static_cast<std::uint32_t>(mesh.triangles.size()));
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        const Vec3 n = (b - a).cross(c - a).normalized();
        for (const Vec3* v : {&n, &a, &b, &c}) {
            for (int i = 0; i < 3; ++i) {
                put(out, static_cast<float>((*v)[i]));
            }
        }
        put(out, std::uint16_t{0});
    }
    write_binary_file(path, out);
}

TriangleMesh read_stl(const std::filesystem::path& path) {
    const auto in = read_binary_file(path);
    std::size_t pos = 80;
    const auto count = get<std::uint32_t>(in, pos);
    if (in.size() != 84 + static_cast<std::size_t>(count) * 50) {
        throw ParseError(path.string() + ": STL size does not match its triangle count " + std::to_string(count));
    }
    TriangleMesh mesh;
    for (std::uint32_t t = 0; t < count; ++t) {
        pos += 12;  // facet normal, recomputed from winding
        std::array<std::uint32_t, 3> tri{};
        for (auto& idx : tri) {
            Vec3 v;
            for (int i = 0; i < 3; ++i) {
                v[i] = get<float>(in, pos);
            }
            idx = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.push_back(v);
        }
        pos += 2;
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    mesh.validate();
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.precision(17);
    out << "# gsforge mesh\n";
    for (const auto& v : mesh.vertices) {
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
    for (const auto& n : mesh.normals) {
        out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    }
    const bool with_normals = !mesh.normals.empty();
    for (const auto& t : mesh.triangles) {
        out << 'f';
        for (auto i : t) {
            out << ' ' << i + 1;
            if (with_normals) {
                out << "//" << i + 1;
            }
        }
        out << '\n';
    }
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

TriangleMesh read_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    TriangleMesh mesh;
    std::vector<Vec3> normals;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        auto fail = [&](const std::string& what) {
            return ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
        };
        if (tag == "v" || tag == "vn") {
            Vec3 v;
            if (!(ss >> v.x() >> v.y() >> v.z())) {
                throw fail("expected three coordinates");
            }
            (tag == "v" ? mesh.vertices : normals).push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string token;
            while (ss >> token) {
                long idx = 0;
                try {
                    idx = std::stol(token.substr(0, token.find('/')));
                } catch (const std::exception&) {
                    throw fail("bad face index '" + token + "'");
                }
                if (idx < 0) {
                    idx += static_cast<long>(mesh.vertices.size()) + 1;
                }
                if (idx < 1 || static_cast<std::size_t>(idx) > mesh.vertices.size()) {
                    throw fail("face index " + token + " out of range");
                }
                poly.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            if (poly.size() < 3) {
                throw fail("face needs at least three vertices");
            }
            for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
                mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
            }
        }
    }
    if (normals.size() == mesh.vertices.size()) {
        mesh.normals = std::move(normals);
    }
    return mesh;
}

void write_tsdf_checkpoint(const TsdfVolume& volume, const std::filesystem::path& raw_path) {
    std::vector<std::uint8_t> out;
    out.reserve(volume.voxel_count() * 8);
    for (double v : volume.values()) {
        put(out, static_cast<float>(v));
    }
    for (double w : volume.weights()) {
        put(out, static_cast<float>(w));
    }
    write_binary_file(raw_path, out);
    const nlohmann::json meta = {
        {"origin", {volume.origin().x(), volume.origin().y(), volume.origin().z()}},
        {"voxel_size", volume.voxel_size()},
        {"dims", {volume.dims().x(), volume.dims().y(), volume.dims().z()}},
        {"truncation", volume.truncation()},
        {"layout", "float32 values then float32 weights, x fastest, little endian"},
    };
    std::ofstream side(raw_path.string() + ".json");
    side << meta.dump(2) << '\n';
    if (!side) {
        throw Error("failed writing " + raw_path.string() + ".json");
    }
}

TsdfVolume read_tsdf_checkpoint(const std::filesystem::path& raw_path) {
    std::ifstream side(raw_path.string() + ".json");
    if (!side) {
        throw Error("cannot open " + raw_path.string() + ".json");
    }
    nlohmann::json meta;
    try {
        side >> meta;
        const auto o = meta.at("origin").get<std::array<double, 3>>();
        const auto d = meta.at("dims").get<std::array<int, 3>>();
        TsdfVolume volume(Vec3(o[0], o[1], o[2]), meta.at("voxel_size").get<double>(), Vec3i(d[0], d[1], d[2]),
                          meta.at("truncation").get<double>());
        const auto raw = read_binary_file(raw_path);
        if (raw.size() != volume.voxel_count() * 8) {
            throw ParseError(raw_path.string() + ": expected " + std::to_string(volume.voxel_count() * 8) +
                             " bytes, found " + std::to_string(raw.size()));
        }
        std::size_t pos = 0;
        for (auto& v : volume.mutable_values()) {
            v = get<float>(raw, pos);
        }
        for (auto& w : volume.mutable_weights()) {
            w = get<float>(raw, pos);
        }
        return volume;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(raw_path.string() + ".json: " + e.what());
    }
}

}  // namespace gsforge
