// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

namespace gsforge {

static_assert(std::endian::native == std::endian::little, "PLY codec assumes a little-endian host");

namespace {

constexpr std::string_view kEndHeader = "end_header\n";

std::vector<std::string> canonical_properties(int degree) {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(degree) - 1);
    for (int i = 0; i < rest; ++i) {
        names.push_back("f_rest_" + std::to_string(i));
    }
    names.emplace_back("opacity");
    for (int i = 0; i < 3; ++i) {
        names.push_back("scale_" + std::to_string(i));
    }
    for (int i = 0; i < 4; ++i) {
        names.push_back("rot_" + std::to_string(i));
    }
    return names;
}

struct Header {
    std::size_t vertex_count = 0;
    std::vector<std::string> properties;
    std::size_t data_offset = 0;
};

Header parse_header(std::span<const std::uint8_t> bytes) {
    const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const auto end = text.find(kEndHeader);
    if (end == std::string_view::npos) {
        throw ParseError("PLY header: missing end_header");
    }
    Header h;
    h.data_offset = end + kEndHeader.size();
    std::istringstream in{std::string(text.substr(0, end))};
    std::string line;
    if (!std::getline(in, line) || line != "ply") {
        throw ParseError("PLY header: missing 'ply' magic");
    }
    bool have_format = false;
    bool have_vertex = false;
    bool in_vertex = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword.empty() || keyword == "comment" || keyword == "obj_info") {
            continue;
        }
        if (keyword == "format") {
            std::string fmt;
            std::string version;
            ls >> fmt >> version;
            if (fmt != "binary_little_endian") {
                throw ParseError("PLY header: unsupported format '" + fmt + "'");
            }
            have_format = true;
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (!ls || count < 0) {
                throw ParseError("PLY header: malformed element line '" + line + "'");
            }
            in_vertex = name == "vertex";
            if (in_vertex) {
                if (have_vertex) {
                    throw ParseError("PLY header: duplicate vertex element");
                }
                have_vertex = true;
                h.vertex_count = static_cast<std::size_t>(count);
            } else if (count != 0) {
                throw ParseError("PLY header: unsupported non-empty element '" + name + "'");
            }
        } else if (keyword == "property") {
            std::string type;
            std::string name;
            ls >> type >> name;
            if (!ls) {
                throw ParseError("PLY header: malformed property line '" + line + "'");
            }
            if (!in_vertex) {
                throw ParseError("PLY header: property '" + name + "' outside the vertex element");
            }
            if (type != "float" && type != "float32") {
                throw ParseError("PLY header: property '" + name + "' has unsupported type '" + type + "'");
            }
            h.properties.push_back(name);
        } else {
            throw ParseError("PLY header: unexpected line '" + line + "'");
        }
    }
    if (!have_format) {
        throw ParseError("PLY header: missing format line");
    }
    if (!have_vertex) {
        throw ParseError("PLY header: missing vertex element");
    }
    return h;
}

}  // namespace

GaussianScene load_ply(std::span<const std::uint8_t> bytes) {
    const Header h = parse_header(bytes);

    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < h.properties.size(); ++i) {
        if (!column.emplace(h.properties[i], i).second) {
            throw ParseError("PLY header: duplicate property '" + h.properties[i] + "'");
        }
    }
    int rest_count = 0;
    while (column.count("f_rest_" + std::to_string(rest_count)) != 0) {
        ++rest_count;
    }
    int degree = -1;
    for (int l = 0; l <= kMaxShDegree; ++l) {
        if (3 * (sh_coeff_count(l) - 1) == rest_count) {
            degree = l;
        }
    }
    if (degree < 0) {
        throw ParseError("PLY: property 'f_rest_" + std::to_string(rest_count) +
                         "' missing (f_rest count does not match any SH degree)");
    }
    for (const auto& name : canonical_properties(degree)) {
        if (name != "nx" && name != "ny" && name != "nz" && column.count(name) == 0) {
            throw ParseError("PLY: missing required property '" + name + "'");
        }
    }

    const std::size_t stride = h.properties.size() * sizeof(float);
    const std::size_t payload = bytes.size() - h.data_offset;
    if (payload != h.vertex_count * stride) {
        throw ParseError("PLY: element vertex count " + std::to_string(h.vertex_count) + " needs " +
                         std::to_string(h.vertex_count * stride) + " bytes of property '" +
                         h.properties.back() + "' data, found " + std::to_string(payload));
    }

    const int k = sh_coeff_count(degree);
    std::vector<float> row(h.properties.size());
    auto get = [&](const std::string& name) { return static_cast<double>(row[column.at(name)]); };

    std::vector<SplatRecord> splats;
    splats.reserve(h.vertex_count);
    for (std::size_t v = 0; v < h.vertex_count; ++v) {
        std::memcpy(row.data(), bytes.data() + h.data_offset + v * stride, stride);
        SplatRecord s;
        s.mean = {get("x"), get("y"), get("z")};
        s.sh.assign(static_cast<std::size_t>(k), Vec3::Zero());
        for (int c = 0; c < 3; ++c) {
            s.sh[0][c] = get("f_dc_" + std::to_string(c));
            for (int j = 1; j < k; ++j) {
                s.sh[static_cast<std::size_t>(j)][c] = get("f_rest_" + std::to_string(c * (k - 1) + (j - 1)));
            }
        }
        s.opacity_logit = get("opacity");
        s.log_scale = {get("scale_0"), get("scale_1"), get("scale_2")};
        s.rotation = Quat(get("rot_0"), get("rot_1"), get("rot_2"), get("rot_3"));
        splats.push_back(std::move(s));
    }
    try {
        return GaussianScene(std::move(splats), degree);
    } catch (const ValidationError& e) {
        throw ParseError(std::string("PLY: ") + e.what());
    }
}

std::vector<std::uint8_t> save_ply(const GaussianScene& scene) {
    const int degree = scene.sh_degree();
    const auto names = canonical_properties(degree);
    std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(scene.size()) + "\n";
    for (const auto& n : names) {
        header += "property float " + n + "\n";
    }
    header += kEndHeader;

    std::vector<std::uint8_t> out(header.begin(), header.end());
    const int k = sh_coeff_count(degree);
    std::vector<float> row;
    row.reserve(names.size());
    for (const auto& s : scene.splats()) {
        row.clear();
        for (int i = 0; i < 3; ++i) {
            row.push_back(static_cast<float>(s.mean[i]));
        }
        row.insert(row.end(), 3, 0.0f);
        for (int c = 0; c < 3; ++c) {
            row.push_back(static_cast<float>(s.sh[0][c]));
        }
        for (int c = 0; c < 3; ++c) {
            for (int j = 1; j < k; ++j) {
                row.push_back(static_cast<float>(s.sh[static_cast<std::size_t>(j)][c]));
            }
        }
        row.push_back(static_cast<float>(s.opacity_logit));
        for (int i = 0; i < 3; ++i) {
            row.push_back(static_cast<float>(s.log_scale[i]));
        }
        row.push_back(static_cast<float>(s.rotation.w()));
        row.push_back(static_cast<float>(s.rotation.x()));
        row.push_back(static_cast<float>(s.rotation.y()));
        row.push_back(static_cast<float>(s.rotation.z()));
        const auto* p = reinterpret_cast<const std::uint8_t*>(row.data());
        out.insert(out.end(), p, p + row.size() * sizeof(float));
    }
    return out;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

GaussianScene read_ply_file(const std::filesystem::path& path) { return load_ply(read_binary_file(path)); }

void write_ply_file(const std::filesystem::path& path, const GaussianScene& scene) {
    write_binary_file(path, save_ply(scene));
}

}  // namespace gsforge
