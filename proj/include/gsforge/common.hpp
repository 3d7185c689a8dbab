// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (files, wire frames, JSON documents).
class ParseError : public Error {
  public:
    using Error::Error;
};

/// Input is well-formed but violates a documented invariant.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Geometric degeneracy: coplanar points, rank deficiency, shear.
class DegenerateError : public Error {
  public:
    using Error::Error;
};

/// Dense row-major float64 image with interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    [[nodiscard]] std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    [[nodiscard]] double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    [[nodiscard]] bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Worker count: GSFORGE_THREADS if set and positive, else hardware concurrency.
[[nodiscard]] unsigned worker_count();

/// Runs fn(i) for i in [0, n) across worker_count() threads. Chunks are
/// contiguous so each index is processed by exactly one worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Wraps an angle to (-pi, pi].
[[nodiscard]] double wrap_angle(double a);

}  // namespace gsforge
