// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>

// The case table is derived at startup instead of transcribed. Each cube
// face contributes one segment per run of negative corners along its
// boundary, so a face shared by two cells always yields the same segments in
// both and the surface closes across cells. Segments chain into loops that
// are fan triangulated.

namespace gsforge {

namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

constexpr std::array<std::array<int, 2>, 12> kEdge = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

// Face corner cycles, counterclockwise seen from outside the cube.
constexpr std::array<std::array<int, 4>, 6> kFace = {{
    {0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4}, {3, 7, 6, 2}, {0, 4, 7, 3}, {1, 2, 6, 5},
}};

using CaseTable = std::array<std::vector<std::array<int, 3>>, 256>;

int edge_between(int a, int b) {
    for (int e = 0; e < 12; ++e) {
        if ((kEdge[e][0] == a && kEdge[e][1] == b) || (kEdge[e][0] == b && kEdge[e][1] == a)) {
            return e;
        }
    }
    return -1;
}

bool share_face(int e0, int e1) {
    for (const auto& face : kFace) {
        int hits = 0;
        for (int s = 0; s < 4; ++s) {
            const int e = edge_between(face[s], face[(s + 1) % 4]);
            hits += (e == e0 || e == e1) ? 1 : 0;
        }
        if (hits == 2) {
            return true;
        }
    }
    return false;
}

bool interior_fan(const std::vector<int>& loop, std::size_t apex) {
    const std::size_t n = loop.size();
    for (std::size_t v = 2; v + 1 < n; ++v) {
        if (share_face(loop[apex], loop[(apex + v) % n])) {
            return false;
        }
    }
    return true;
}

CaseTable build_table() {
    CaseTable table;
    for (int mask = 1; mask < 255; ++mask) {
        auto negative = [&](int c) { return ((mask >> c) & 1) != 0; };
        std::array<int, 12> next;
        next.fill(-1);
        for (const auto& face : kFace) {
            for (int s = 0; s < 4; ++s) {
                if (negative(face[s]) || !negative(face[(s + 1) % 4])) {
                    continue;
                }
                const int enter = edge_between(face[s], face[(s + 1) % 4]);
                int t = (s + 1) % 4;
                while (negative(face[(t + 1) % 4])) {
                    t = (t + 1) % 4;
                }
                next[static_cast<std::size_t>(enter)] = edge_between(face[t], face[(t + 1) % 4]);
            }
        }
        std::array<bool, 12> used{};
        for (int start = 0; start < 12; ++start) {
            if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) {
                continue;
            }
            std::vector<int> loop;
            for (int e = start; !used[static_cast<std::size_t>(e)]; e = next[static_cast<std::size_t>(e)]) {
                used[static_cast<std::size_t>(e)] = true;
                loop.push_back(e);
            }
            // A fan diagonal lying in a cube face would be emitted by the
            // neighboring cell too, so pick an apex whose diagonals all cut
            // through the cell interior.
            const std::size_t n = loop.size();
            std::size_t apex = 0;
            while (apex < n && !interior_fan(loop, apex)) {
                ++apex;
            }
            if (apex == n) {
                throw std::logic_error("marching cubes: no interior fan for case " + std::to_string(mask));
            }
            for (std::size_t v = 1; v + 1 < n; ++v) {
                table[static_cast<std::size_t>(mask)].push_back(
                    {loop[apex], loop[(apex + v) % n], loop[(apex + v + 1) % n]});
            }
        }
    }
    return table;
}

const CaseTable& case_table() {
    static const CaseTable table = build_table();
    return table;
}

}  // namespace

TriangleMesh extract_mesh(const TsdfVolume& volume) {
    const auto& table = case_table();
    const Vec3i dims = volume.dims();
    const auto& values = volume.values();
    const auto& weights = volume.weights();
    TriangleMesh mesh;
    if ((dims.array() < 2).any()) {
        return mesh;
    }

    // Global edge key: voxel index of the lower endpoint times 3 plus axis.
    using Tri = std::array<std::uint64_t, 3>;
    std::vector<std::vector<Tri>> layers(static_cast<std::size_t>(dims.z() - 1));
    parallel_for(layers.size(), [&](std::size_t kz) {
        const int k = static_cast<int>(kz);
        auto& out = layers[kz];
        for (int j = 0; j + 1 < dims.y(); ++j) {
            for (int i = 0; i + 1 < dims.x(); ++i) {
                int mask = 0;
                bool weighted = true;
                for (int c = 0; c < 8 && weighted; ++c) {
                    const auto idx = volume.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
                    weighted = weights[idx] > 0.0;
                    mask |= values[idx] < 0.0 ? (1 << c) : 0;
                }
                if (!weighted || mask == 0 || mask == 255) {
                    continue;
                }
                auto key = [&](int e) {
                    const auto& a = kCorner[static_cast<std::size_t>(kEdge[static_cast<std::size_t>(e)][0])];
                    const auto& b = kCorner[static_cast<std::size_t>(kEdge[static_cast<std::size_t>(e)][1])];
                    int axis = 0;
                    while (a[static_cast<std::size_t>(axis)] == b[static_cast<std::size_t>(axis)]) {
                        ++axis;
                    }
                    const auto base = volume.index(i + std::min(a[0], b[0]), j + std::min(a[1], b[1]),
                                                   k + std::min(a[2], b[2]));
                    return static_cast<std::uint64_t>(base) * 3 + static_cast<std::uint64_t>(axis);
                };
                for (const auto& tri : table[static_cast<std::size_t>(mask)]) {
                    out.push_back({key(tri[0]), key(tri[1]), key(tri[2])});
                }
            }
        }
    });

    const auto nx = static_cast<std::uint64_t>(dims.x());
    const auto nxy = nx * static_cast<std::uint64_t>(dims.y());
    // Crossings closer than `snap` to a grid corner are welded into one vertex
    // at that corner. Without this, near-zero voxels spawn slivers below the
    // area floor, and dropping those would open holes. The snap distance keeps
    // every surviving corner triangle above the floor.
    constexpr double kMinArea = 1e-12;
    const double snap = std::min(2.0 * std::sqrt(kMinArea), 0.25 * volume.voxel_size());
    constexpr std::uint64_t kCornerKey = std::uint64_t{1} << 63;
    struct Crossing {
        std::uint64_t key;
        Vec3 position;
    };
    auto crossing = [&](std::uint64_t key) {
        const auto idx = key / 3;
        const int axis = static_cast<int>(key % 3);
        const int i = static_cast<int>(idx % nx);
        const int j = static_cast<int>((idx / nx) % static_cast<std::uint64_t>(dims.y()));
        const int k = static_cast<int>(idx / nxy);
        Vec3i other(i, j, k);
        other[axis] += 1;
        const auto other_idx = volume.index(other.x(), other.y(), other.z());
        const double v0 = values[idx];
        const double v1 = values[other_idx];
        const double offset = v0 / (v0 - v1) * volume.voxel_size();
        if (offset < snap) {
            return Crossing{kCornerKey | idx, volume.voxel_center(i, j, k)};
        }
        if (volume.voxel_size() - offset < snap) {
            return Crossing{kCornerKey | other_idx, volume.voxel_center(other.x(), other.y(), other.z())};
        }
        Vec3 p = volume.voxel_center(i, j, k);
        p[axis] += offset;
        return Crossing{key, p};
    };

    std::unordered_map<std::uint64_t, std::uint32_t> vertex_of;
    auto vertex = [&](const Crossing& c) {
        const auto [it, inserted] = vertex_of.emplace(c.key, static_cast<std::uint32_t>(mesh.vertices.size()));
        if (inserted) {
            mesh.vertices.push_back(c.position);
        }
        return it->second;
    };
    for (const auto& layer : layers) {
        for (const auto& tri : layer) {
            const Crossing a = crossing(tri[0]);
            const Crossing b = crossing(tri[1]);
            const Crossing c = crossing(tri[2]);
            if (a.key == b.key || b.key == c.key || a.key == c.key) {
                continue;
            }
            if (0.5 * (b.position - a.position).cross(c.position - a.position).norm() <= kMinArea) {
                continue;
            }
            mesh.triangles.push_back({vertex(a), vertex(b), vertex(c)});
        }
    }
    return mesh;
}

}  // namespace gsforge
