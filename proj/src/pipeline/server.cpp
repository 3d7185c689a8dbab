// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/render_service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace gsforge {

namespace {

enum class ReadStatus { complete, closed_clean, truncated };

// Reads exactly out.size() bytes. closed_clean means the peer closed before
// the first byte; truncated means it closed part way through.
ReadStatus read_exact(int fd, std::span<std::uint8_t> out) {
    std::size_t got = 0;
    while (got < out.size()) {
        const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
        if (n == 0) {
            return got == 0 ? ReadStatus::closed_clean : ReadStatus::truncated;
        }
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return got == 0 ? ReadStatus::closed_clean : ReadStatus::truncated;
        }
        got += static_cast<std::size_t>(n);
    }
    return ReadStatus::complete;
}

bool write_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

RenderServer::RenderServer(std::shared_ptr<const ServiceAssets> assets, ServerOptions options)
    : assets_(std::move(assets)), options_(std::move(options)) {
    if (!assets_) {
        throw ValidationError("RenderServer needs assets");
    }
}

RenderServer::~RenderServer() { stop(); }

void RenderServer::start() {
    if (running_) {
        return;
    }
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw Error(errno_text("socket"));
    }
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(options_.port);
    if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw ValidationError("bad bind address " + options_.bind_address);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
        ::listen(listen_fd_, options_.backlog) < 0) {
        const std::string message = errno_text("bind");
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(message);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void RenderServer::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    // shutdown wakes a blocked accept; close alone does not on Linux.
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    if (acceptor_.joinable()) {
        acceptor_.join();
    }
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        for (int fd : open_fds_) {
            ::shutdown(fd, SHUT_RDWR);
        }
        workers.swap(workers_);
    }
    for (auto& t : workers) {
        t.join();
    }
}

void RenderServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR || errno == ECONNABORTED) {
                continue;
            }
            break;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(mutex_);
        if (!running_) {
            ::close(fd);
            break;
        }
        open_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void RenderServer::serve_connection(int fd) {
    RequestRenderer renderer(assets_);
    auto reply = [fd](const RenderResponse& r) { return write_all(fd, encode_response(r)); };
    std::vector<std::uint8_t> header;
    while (true) {
        std::uint8_t prefix[4];
        const ReadStatus s = read_exact(fd, prefix);
        if (s == ReadStatus::closed_clean) {
            break;
        }
        if (s == ReadStatus::truncated) {
            reply(error_response(0, kMalformedFrame, "connection closed inside the length prefix"));
            break;
        }
        const std::uint32_t length = read_be32(prefix);
        if (length == 0 || length > kMaxHeaderBytes) {
            reply(error_response(0, kMalformedFrame, "declared header length " + std::to_string(length) +
                                                         " outside [1, " + std::to_string(kMaxHeaderBytes) + "]"));
            break;
        }
        header.resize(length);
        if (read_exact(fd, header) != ReadStatus::complete) {
            reply(error_response(0, kMalformedFrame, "frame shorter than its declared length"));
            break;
        }
        Json json = Json::parse(header.begin(), header.end(), nullptr, false);
        if (json.is_discarded() || !json.is_object()) {
            reply(error_response(0, kMalformedFrame, "header is not a JSON object"));
            break;
        }
        // Requests carry no body, so a nonzero payload would desynchronize the stream.
        if (json.contains("payload_bytes")) {
            const Json& p = json["payload_bytes"];
            if (!p.is_number_unsigned() || p.get<std::uint64_t>() != 0) {
                reply(error_response(0, kMalformedFrame, "requests must not carry a payload"));
                break;
            }
            json.erase("payload_bytes");
        }
        std::uint64_t id = 0;
        if (json.contains("id") && json["id"].is_number_unsigned()) {
            id = json["id"].get<std::uint64_t>();
        }
        RenderResponse response;
        try {
            response = renderer.handle(request_from_json(json));
        } catch (const RequestError& e) {
            response = error_response(id, e.code(), e.what());
        } catch (const std::exception& e) {
            response = error_response(id, kRenderFailed, e.what());
        }
        if (!reply(response)) {
            break;
        }
    }
    {
        std::lock_guard lock(mutex_);
        open_fds_.erase(std::remove(open_fds_.begin(), open_fds_.end(), fd), open_fds_.end());
    }
    ::close(fd);
    ++served_;
}

RenderClient::RenderClient(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &result); rc != 0) {
        throw Error("resolve " + host + ": " + ::gai_strerror(rc));
    }
    for (addrinfo* p = result; p; p = p->ai_next) {
        fd_ = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd_ >= 0 && ::connect(fd_, p->ai_addr, p->ai_addrlen) == 0) {
            break;
        }
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }
    ::freeaddrinfo(result);
    if (fd_ < 0) {
        throw Error("cannot connect to " + host + ":" + service);
    }
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

RenderClient::~RenderClient() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void RenderClient::send_bytes(std::span<const std::uint8_t> bytes) {
    if (!write_all(fd_, bytes)) {
        throw Error(errno_text("send"));
    }
}

void RenderClient::shutdown_write() { ::shutdown(fd_, SHUT_WR); }

std::optional<RenderResponse> RenderClient::receive() {
    std::uint8_t prefix[4];
    const ReadStatus s = read_exact(fd_, prefix);
    if (s == ReadStatus::closed_clean) {
        return std::nullopt;
    }
    if (s == ReadStatus::truncated) {
        throw ParseError("response truncated inside the length prefix");
    }
    const std::uint32_t length = read_be32(prefix);
    if (length == 0 || length > kMaxHeaderBytes) {
        throw ParseError("response header length out of range");
    }
    std::vector<std::uint8_t> header(length);
    if (read_exact(fd_, header) != ReadStatus::complete) {
        throw ParseError("response header truncated");
    }
    const Json json = Json::parse(header.begin(), header.end(), nullptr, false);
    if (json.is_discarded() || !json.is_object() || !json.contains("payload_bytes") ||
        !json["payload_bytes"].is_number_unsigned()) {
        throw ParseError("response header is not valid JSON");
    }
    std::vector<std::uint8_t> body(json["payload_bytes"].get<std::size_t>());
    if (!body.empty() && read_exact(fd_, body) != ReadStatus::complete) {
        throw ParseError("response body truncated");
    }
    return response_from_wire(json, std::move(body));
}

RenderResponse RenderClient::request(const RenderRequest& request) {
    send_bytes(encode_request(request));
    auto response = receive();
    if (!response) {
        throw Error("server closed the connection");
    }
    return std::move(*response);
}

}  // namespace gsforge
