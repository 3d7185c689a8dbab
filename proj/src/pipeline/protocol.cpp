// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/render_service.hpp"

#include "gsforge/compose.hpp"
#include "gsforge/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

namespace gsforge {

namespace {

[[noreturn]] void invalid(const std::string& message) { throw RequestError(kInvalidRequest, message); }

void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const char* what) {
    if (!j.is_object()) {
        invalid(std::string(what) + " must be an object");
    }
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            invalid(std::string(what) + ": unknown key '" + item.key() + "'");
        }
    }
}

double finite_number(const Json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        invalid(std::string("intrinsics.") + key + " must be a number");
    }
    const double v = j.at(key).get<double>();
    if (!std::isfinite(v)) {
        invalid(std::string("intrinsics.") + key + " must be finite");
    }
    return v;
}

int positive_int(const Json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) {
        invalid(std::string("intrinsics.") + key + " must be an integer");
    }
    const auto v = j.at(key).get<std::int64_t>();
    if (v <= 0 || v > 1'000'000) {
        invalid(std::string("intrinsics.") + key + " out of range");
    }
    return static_cast<int>(v);
}

void validate_intrinsics(const Intrinsics& k) {
    if (k.width <= 0 || k.height <= 0 ||
        static_cast<std::size_t>(k.width) * static_cast<std::size_t>(k.height) > kMaxPixels) {
        invalid("image size out of range");
    }
    if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
        invalid("focal lengths must be positive");
    }
}

// Bound on coordinates and scales, far beyond any scene but small enough
// that projected footprints stay finite.
constexpr double kMaxCoordinate = 1e6;

void put_f32_le(std::uint8_t* out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
        out[b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
}

}  // namespace

std::string to_string(Channel c) {
    switch (c) {
        case Channel::rgb: return "rgb";
        case Channel::depth: return "depth";
        case Channel::gray: return "gray";
    }
    return "?";
}

Channel parse_channel(const std::string& s) {
    if (s == "rgb") return Channel::rgb;
    if (s == "depth") return Channel::depth;
    if (s == "gray") return Channel::gray;
    throw ParseError("unknown channel '" + s + "'");
}

Json request_to_json(const RenderRequest& r) {
    Json j = {{"id", r.id},
              {"camera", {{"position", to_json(r.position)}, {"orientation", to_json(r.orientation)}}}};
    if (r.intrinsics) {
        const auto& k = *r.intrinsics;
        j["intrinsics"] = {{"width", k.width}, {"height", k.height}, {"fx", k.fx},
                           {"fy", k.fy},       {"cx", k.cx},         {"cy", k.cy}};
    }
    if (!r.objects.empty()) {
        Json objects = Json::array();
        for (const auto& o : r.objects) {
            objects.push_back({{"id", o.object_id}, {"pose", to_json(o.pose)}});
        }
        j["objects"] = std::move(objects);
    }
    Json channels = Json::array();
    for (Channel c : r.channels) {
        channels.push_back(to_string(c));
    }
    j["channels"] = std::move(channels);
    return j;
}

RenderRequest request_from_json(const Json& j) {
    try {
        reject_unknown_keys(j, {"id", "camera", "intrinsics", "objects", "channels"}, "request");
        RenderRequest r;
        if (!j.contains("id") || !j.at("id").is_number_unsigned()) {
            invalid("request id must be a nonnegative integer");
        }
        r.id = j.at("id").get<std::uint64_t>();
        if (!j.contains("camera")) {
            invalid("request has no camera");
        }
        const Json& cam = j.at("camera");
        reject_unknown_keys(cam, {"position", "orientation"}, "camera");
        if (!cam.contains("position") || !cam.contains("orientation")) {
            invalid("camera needs position and orientation");
        }
        r.position = vec3_from_json(cam.at("position"));
        r.orientation = quat_from_json(cam.at("orientation"));
        if (r.position.lpNorm<Eigen::Infinity>() > kMaxCoordinate) {
            invalid("camera position out of range");
        }
        if (j.contains("intrinsics")) {
            const Json& k = j.at("intrinsics");
            reject_unknown_keys(k, {"width", "height", "fx", "fy", "cx", "cy"}, "intrinsics");
            Intrinsics in;
            in.width = positive_int(k, "width");
            in.height = positive_int(k, "height");
            in.fx = finite_number(k, "fx");
            in.fy = finite_number(k, "fy");
            in.cx = finite_number(k, "cx");
            in.cy = finite_number(k, "cy");
            validate_intrinsics(in);
            r.intrinsics = in;
        }
        if (j.contains("objects")) {
            const Json& objects = j.at("objects");
            if (!objects.is_array()) {
                invalid("objects must be an array");
            }
            for (const Json& o : objects) {
                reject_unknown_keys(o, {"id", "pose"}, "object update");
                if (!o.contains("id") || !o.at("id").is_string() || !o.contains("pose")) {
                    invalid("object update needs a string id and a pose");
                }
                SimilarityTransform pose = similarity_from_json(o.at("pose"));
                pose.validate();
                if (pose.translation.lpNorm<Eigen::Infinity>() > kMaxCoordinate || pose.scale > kMaxCoordinate ||
                    pose.scale < 1.0 / kMaxCoordinate) {
                    invalid("object pose out of range");
                }
                r.objects.push_back({o.at("id").get<std::string>(), pose});
            }
        }
        if (j.contains("channels")) {
            const Json& channels = j.at("channels");
            if (!channels.is_array() || channels.empty() || channels.size() > 3) {
                invalid("channels must be a nonempty array of rgb, depth, gray");
            }
            r.channels.clear();
            for (const Json& c : channels) {
                if (!c.is_string()) {
                    invalid("channel names must be strings");
                }
                const Channel ch = parse_channel(c.get<std::string>());
                if (std::find(r.channels.begin(), r.channels.end(), ch) != r.channels.end()) {
                    invalid("duplicate channel " + c.get<std::string>());
                }
                r.channels.push_back(ch);
            }
        }
        return r;
    } catch (const RequestError&) {
        throw;
    } catch (const Error& e) {
        invalid(e.what());
    } catch (const Json::exception& e) {
        invalid(e.what());
    }
}

Json response_header(const RenderResponse& r) {
    Json j = {{"id", r.id}, {"status", r.ok ? "ok" : "error"}};
    if (!r.ok) {
        j["code"] = r.code;
        j["message"] = r.message;
    }
    Json channels = Json::array();
    for (const auto& d : r.channels) {
        channels.push_back({{"name", to_string(d.channel)},
                            {"width", d.width},
                            {"height", d.height},
                            {"components", d.components},
                            {"dtype", d.channel == Channel::depth ? "f32le" : "u8"},
                            {"offset", d.offset},
                            {"bytes", d.bytes}});
    }
    j["channels"] = std::move(channels);
    j["payload_bytes"] = r.payload.size();
    return j;
}

RenderResponse response_from_wire(const Json& h, std::vector<std::uint8_t> body) {
    try {
        RenderResponse r;
        r.id = h.at("id").get<std::uint64_t>();
        const std::string status = h.at("status").get<std::string>();
        if (status != "ok" && status != "error") {
            throw ParseError("unknown status '" + status + "'");
        }
        r.ok = status == "ok";
        if (!r.ok) {
            r.code = h.at("code").get<std::string>();
            r.message = h.value("message", "");
        }
        std::size_t expected = 0;
        for (const Json& c : h.at("channels")) {
            ChannelDescriptor d;
            d.channel = parse_channel(c.at("name").get<std::string>());
            d.width = c.at("width").get<int>();
            d.height = c.at("height").get<int>();
            d.components = c.at("components").get<int>();
            d.element_size = d.channel == Channel::depth ? 4 : 1;
            d.offset = c.at("offset").get<std::size_t>();
            d.bytes = c.at("bytes").get<std::size_t>();
            if (d.offset != expected ||
                d.bytes != static_cast<std::size_t>(d.width) * d.height * d.components * d.element_size) {
                throw ParseError("channel descriptors do not tile the payload");
            }
            expected += d.bytes;
            r.channels.push_back(d);
        }
        if (expected != body.size() || h.at("payload_bytes").get<std::size_t>() != body.size()) {
            throw ParseError("payload length does not match the channel descriptors");
        }
        r.payload = std::move(body);
        return r;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("response header: ") + e.what());
    }
}

std::vector<std::uint8_t> encode_frame(const Json& header, std::span<const std::uint8_t> body) {
    // Replace rather than throw on invalid UTF-8 so an error message quoting
    // client bytes can always be sent.
    const std::string text = header.dump(-1, ' ', false, Json::error_handler_t::replace);
    if (text.size() > kMaxHeaderBytes) {
        throw ValidationError("frame header exceeds the size limit");
    }
    const auto n = static_cast<std::uint32_t>(text.size());
    std::vector<std::uint8_t> out;
    out.reserve(4 + text.size() + body.size());
    for (int shift = 24; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>(n >> shift));
    }
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::vector<std::uint8_t> encode_request(const RenderRequest& request) {
    return encode_frame(request_to_json(request));
}

std::vector<std::uint8_t> encode_response(const RenderResponse& response) {
    return encode_frame(response_header(response), response.payload);
}

GaussianScene request_scene(const ServiceAssets& assets, const RenderRequest& request) {
    std::map<std::string, SimilarityTransform> poses;
    for (const auto& [id, object] : assets.objects) {
        poses[id] = object.default_pose;
    }
    for (const auto& update : request.objects) {
        auto it = poses.find(update.object_id);
        if (it == poses.end()) {
            throw RequestError(kUnknownObject, "unknown object '" + update.object_id + "'");
        }
        it->second = update.pose;
    }
    std::vector<GaussianScene> parts = {assets.environment};
    for (const auto& [id, object] : assets.objects) {
        parts.push_back(transform_scene(object.scene, poses.at(id)));
    }
    return merge_scenes(parts);
}

CameraModel request_camera(const ServiceAssets& assets, const RenderRequest& request) {
    const Intrinsics k = request.intrinsics.value_or(assets.default_intrinsics);
    validate_intrinsics(k);
    CameraModel cam;
    cam.width = k.width;
    cam.height = k.height;
    cam.fx = k.fx;
    cam.fy = k.fy;
    cam.cx = k.cx;
    cam.cy = k.cy;
    cam.set_pose(request.position, request.orientation);
    return cam;
}

RenderResponse pack_render(std::uint64_t id, const RenderOutput& out, std::span<const Channel> channels) {
    RenderResponse r;
    r.id = id;
    for (Channel c : channels) {
        ChannelDescriptor d;
        d.channel = c;
        d.offset = r.payload.size();
        const Image& img = c == Channel::rgb ? out.rgb : c == Channel::depth ? out.depth : out.gray;
        d.width = img.width;
        d.height = img.height;
        d.components = img.channels;
        if (c == Channel::depth) {
            d.element_size = 4;
            r.payload.resize(d.offset + img.data.size() * 4);
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                put_f32_le(r.payload.data() + d.offset + 4 * i, static_cast<float>(img.data[i]));
            }
        } else {
            d.element_size = 1;
            const auto bytes = to_u8(img);
            r.payload.insert(r.payload.end(), bytes.begin(), bytes.end());
        }
        d.bytes = r.payload.size() - d.offset;
        r.channels.push_back(d);
    }
    return r;
}

RenderResponse render_request(const ServiceAssets& assets, const RenderRequest& request) {
    const GaussianScene scene = request_scene(assets, request);
    return pack_render(request.id, render(scene, request_camera(assets, request), assets.render_options),
                       request.channels);
}

RenderResponse error_response(std::uint64_t id, const std::string& code, const std::string& message) {
    RenderResponse r;
    r.id = id;
    r.ok = false;
    r.code = code;
    r.message = message;
    return r;
}

RequestRenderer::RequestRenderer(std::shared_ptr<const ServiceAssets> assets) : assets_(std::move(assets)) {
    if (!assets_) {
        throw ValidationError("RequestRenderer needs assets");
    }
    for (const auto& [id, object] : assets_->objects) {
        if (object.scene.sh_degree() != assets_->environment.sh_degree()) {
            throw ValidationError("object '" + id + "' has SH degree " + std::to_string(object.scene.sh_degree()) +
                                  " but the environment has " + std::to_string(assets_->environment.sh_degree()));
        }
    }
}

RenderResponse RequestRenderer::handle(const RenderRequest& request) {
    std::map<std::string, SimilarityTransform> poses;
    for (const auto& [id, object] : assets_->objects) {
        poses[id] = object.default_pose;
    }
    for (const auto& update : request.objects) {
        auto it = poses.find(update.object_id);
        if (it == poses.end()) {
            throw RequestError(kUnknownObject, "unknown object '" + update.object_id + "'");
        }
        it->second = update.pose;
    }
    const CameraModel camera = request_camera(*assets_, request);
    std::vector<GaussianScene> parts = {assets_->environment};
    for (const auto& [id, object] : assets_->objects) {
        const SimilarityTransform& pose = poses.at(id);
        auto it = cache_.find(id);
        const bool fresh = it != cache_.end() && it->second.pose.rotation == pose.rotation &&
                           it->second.pose.translation == pose.translation && it->second.pose.scale == pose.scale;
        if (!fresh) {
            it = cache_.insert_or_assign(id, Cached{pose, transform_scene(object.scene, pose)}).first;
        }
        parts.push_back(it->second.scene);
    }
    const GaussianScene scene = merge_scenes(parts);
    return pack_render(request.id, render(scene, camera, assets_->render_options), request.channels);
}

}  // namespace gsforge
