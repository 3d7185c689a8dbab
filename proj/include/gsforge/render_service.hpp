// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

// Pose-in, image-out render service over TCP.
//
// Every frame on the wire, in both directions, is
//
//   u32 big-endian header length | UTF-8 JSON header | payload_bytes of body
//
// Requests carry no body. A request header looks like
//
//   {"id": 7,
//    "camera": {"position": [x, y, z], "orientation": [w, x, y, z]},
//    "intrinsics": {"width": W, "height": H, "fx": .., "fy": .., "cx": .., "cy": ..},
//    "objects": [{"id": "red", "pose": <similarity>}],
//    "channels": ["rgb", "depth", "gray"]}
//
// where intrinsics, objects and channels are optional (service default
// intrinsics, default object poses, ["rgb"]). The camera orientation is
// camera-to-world in the environment frame. A response header is
//
//   {"id": 7, "status": "ok",
//    "channels": [{"name": "rgb", "width": W, "height": H, "components": 3,
//                  "dtype": "u8", "offset": 0, "bytes": W*H*3}, ...],
//    "payload_bytes": N}
//
// followed by the channel buffers in request order: rgb as RGB8 row-major,
// gray as u8, depth as float32 little-endian. Errors set status "error" with
// a "code" and a "message" and carry no body.

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/json_io.hpp"
#include "gsforge/rasterizer.hpp"
#include "gsforge/similarity.hpp"
#include "gsforge/splat.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace gsforge {

enum class Channel { rgb, depth, gray };

[[nodiscard]] std::string to_string(Channel c);
[[nodiscard]] Channel parse_channel(const std::string& s);

struct Intrinsics {
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
};

struct ObjectPoseUpdate {
    std::string object_id;
    SimilarityTransform pose;  // object frame -> environment frame
};

struct RenderRequest {
    std::uint64_t id = 0;
    Vec3 position = Vec3::Zero();
    Quat orientation = Quat::Identity();  // camera-to-world
    std::optional<Intrinsics> intrinsics;
    std::vector<ObjectPoseUpdate> objects;
    std::vector<Channel> channels = {Channel::rgb};
};

struct ChannelDescriptor {
    Channel channel = Channel::rgb;
    int width = 0;
    int height = 0;
    int components = 0;
    int element_size = 0;  // bytes per component
    std::size_t offset = 0;
    std::size_t bytes = 0;
};

struct RenderResponse {
    std::uint64_t id = 0;
    bool ok = true;
    std::string code;  // error code when !ok
    std::string message;
    std::vector<ChannelDescriptor> channels;
    std::vector<std::uint8_t> payload;
};

/// Error codes.
inline constexpr const char* kMalformedFrame = "malformed-frame";
inline constexpr const char* kInvalidRequest = "invalid-request";
inline constexpr const char* kUnknownObject = "unknown-object";
inline constexpr const char* kRenderFailed = "render-failed";

/// Requests with no stated intrinsics, oversize images or larger headers are refused.
inline constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;
inline constexpr std::size_t kMaxPixels = 4096u * 4096u;

/// Raised by the request parser; `code` is one of the constants above.
class RequestError : public ParseError {
  public:
    RequestError(std::string code, const std::string& message) : ParseError(message), code_(std::move(code)) {}
    [[nodiscard]] const std::string& code() const { return code_; }

  private:
    std::string code_;
};

[[nodiscard]] Json request_to_json(const RenderRequest& request);
/// Throws RequestError with kInvalidRequest on schema violations (missing or
/// mistyped fields, non-unit quaternion, bad intrinsics or channels).
[[nodiscard]] RenderRequest request_from_json(const Json& header);

[[nodiscard]] Json response_header(const RenderResponse& response);
/// Rebuilds a response from a header and its body. Throws ParseError when
/// the descriptors do not tile the body exactly.
[[nodiscard]] RenderResponse response_from_wire(const Json& header, std::vector<std::uint8_t> body);

/// u32 big-endian length, header bytes, body bytes.
[[nodiscard]] std::vector<std::uint8_t> encode_frame(const Json& header, std::span<const std::uint8_t> body = {});
[[nodiscard]] std::vector<std::uint8_t> encode_request(const RenderRequest& request);
[[nodiscard]] std::vector<std::uint8_t> encode_response(const RenderResponse& response);

/// One object the service can pose.
struct ServiceObject {
    GaussianScene scene;               // object frame
    SimilarityTransform default_pose;  // object -> environment
};

/// Immutable assets shared by every connection.
struct ServiceAssets {
    GaussianScene environment;  // environment frame
    std::map<std::string, ServiceObject> objects;
    Intrinsics default_intrinsics;
    RenderOptions render_options;
};

/// Environment plus every object at its default pose, overridden by the
/// request's updates, merged in object-id order.
[[nodiscard]] GaussianScene request_scene(const ServiceAssets& assets, const RenderRequest& request);
[[nodiscard]] CameraModel request_camera(const ServiceAssets& assets, const RenderRequest& request);

/// Packs the requested channels of a render into a response body.
[[nodiscard]] RenderResponse pack_render(std::uint64_t id, const RenderOutput& out, std::span<const Channel> channels);

/// Direct library path the service must reproduce byte for byte.
[[nodiscard]] RenderResponse render_request(const ServiceAssets& assets, const RenderRequest& request);

[[nodiscard]] RenderResponse error_response(std::uint64_t id, const std::string& code, const std::string& message);

/// Per-connection renderer. Keeps the transformed object splats of the last
/// pose seen for each object so a static object is transformed only once.
/// Poses never persist across requests: an object absent from a request is
/// drawn at its default pose.
class RequestRenderer {
  public:
    explicit RequestRenderer(std::shared_ptr<const ServiceAssets> assets);
    /// Throws RequestError (kUnknownObject) for an unknown object id.
    [[nodiscard]] RenderResponse handle(const RenderRequest& request);

  private:
    struct Cached {
        SimilarityTransform pose;
        GaussianScene scene;
    };
    std::shared_ptr<const ServiceAssets> assets_;
    std::map<std::string, Cached> cache_;
};

struct ServerOptions {
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks an ephemeral port
    int backlog = 64;
};

/// Thread-per-connection TCP server. Requests on one connection are served
/// in arrival order.
class RenderServer {
  public:
    RenderServer(std::shared_ptr<const ServiceAssets> assets, ServerOptions options = {});
    ~RenderServer();
    RenderServer(const RenderServer&) = delete;
    RenderServer& operator=(const RenderServer&) = delete;

    /// Binds, listens and starts accepting. Throws Error when the port is taken.
    void start();
    /// Closes the listener and every open connection, then joins all threads.
    void stop();
    [[nodiscard]] std::uint16_t port() const { return port_; }
    [[nodiscard]] std::size_t connections_served() const { return served_.load(); }

  private:
    void accept_loop();
    void serve_connection(int fd);

    std::shared_ptr<const ServiceAssets> assets_;
    ServerOptions options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<std::size_t> served_{0};
    std::thread acceptor_;
    std::mutex mutex_;
    std::vector<std::thread> workers_;
    std::vector<int> open_fds_;
};

/// Blocking client for one connection.
class RenderClient {
  public:
    RenderClient(const std::string& host, std::uint16_t port);
    ~RenderClient();
    RenderClient(const RenderClient&) = delete;
    RenderClient& operator=(const RenderClient&) = delete;

    void send_bytes(std::span<const std::uint8_t> bytes);
    /// Half-closes the connection so the server sees end of stream.
    void shutdown_write();
    /// Next response, or nullopt when the server closed the connection.
    [[nodiscard]] std::optional<RenderResponse> receive();
    [[nodiscard]] RenderResponse request(const RenderRequest& request);

  private:
    int fd_ = -1;
};

}  // namespace gsforge
