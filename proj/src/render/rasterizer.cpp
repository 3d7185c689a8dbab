// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/rasterizer.hpp"

#include "gsforge/sh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace gsforge {

namespace {

constexpr int kTileSize = 16;

/// Screen-space state for one splat, shared by every pixel it touches.
struct Prepared {
    std::size_t index = 0;
    double mx = 0.0;
    double my = 0.0;
    double conic_a = 0.0;  // inverse 2D covariance (a b; b c)
    double conic_b = 0.0;
    double conic_c = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    Vec3 normal = Vec3::Zero();  // camera space, facing the camera
    double plane_distance = 0.0;
    double center_distance = 0.0;
    double view_depth = 0.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

Mat3 splat_covariance(const SplatRecord& s, bool flatten) {
    if (!flatten) {
        return s.covariance();
    }
    const Mat3 r = s.rotation_matrix();
    Vec3 s2 = (2.0 * s.log_scale).array().exp();
    s2[s.shortest_axis()] = 0.0;
    return r * s2.asDiagonal() * r.transpose();
}

std::optional<Prepared> prepare(const GaussianScene& scene, std::size_t i, const CameraModel& cam,
                                const Vec3& cam_center, const RenderOptions& opt) {
    const SplatRecord& s = scene[i];
    const auto proj = project_splat(s, cam, opt);
    if (!proj) {
        return std::nullopt;
    }
    Prepared p;
    p.index = i;
    p.opacity = s.opacity();
    if (p.opacity < opt.alpha_cutoff) {
        return std::nullopt;
    }
    const Mat2& cov = proj->cov2d;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0)) {
        return std::nullopt;
    }
    p.mx = proj->mean2d.x();
    p.my = proj->mean2d.y();
    p.conic_a = cov(1, 1) / det;
    p.conic_b = -cov(0, 1) / det;
    p.conic_c = cov(0, 0) / det;
    p.view_depth = proj->view_depth;

    // Beyond this radius o * G < alpha_cutoff, so the box never drops a contribution.
    const double half_tr = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda_max =
        half_tr + std::sqrt(std::max(0.0, 0.25 * (cov(0, 0) - cov(1, 1)) * (cov(0, 0) - cov(1, 1)) +
                                              cov(0, 1) * cov(0, 1)));
    const double radius = std::sqrt(2.0 * std::log(p.opacity / opt.alpha_cutoff) * lambda_max);
    if (!std::isfinite(radius) || !std::isfinite(p.mx) || !std::isfinite(p.my)) {
        return std::nullopt;
    }
    const double fx0 = std::ceil(p.mx - radius - 0.5);
    const double fx1 = std::floor(p.mx + radius - 0.5);
    const double fy0 = std::ceil(p.my - radius - 0.5);
    const double fy1 = std::floor(p.my + radius - 0.5);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > cam.width - 1 || fy0 > cam.height - 1) {
        return std::nullopt;
    }
    p.x0 = static_cast<int>(std::max(0.0, fx0));
    p.x1 = static_cast<int>(std::min<double>(cam.width - 1, fx1));
    p.y0 = static_cast<int>(std::max(0.0, fy0));
    p.y1 = static_cast<int>(std::min<double>(cam.height - 1, fy1));

    const Vec3 dir = (s.mean - cam_center).normalized();
    p.color = eval_sh(s.sh, scene.sh_degree(), dir).cwiseMax(0.0);

    const Vec3 mean_cam = cam.to_camera(s.mean);
    Vec3 n = cam.rotation * s.shortest_axis_direction();
    if (n.dot(mean_cam) > 0.0) {
        n = -n;
    }
    p.normal = n;
    p.plane_distance = -n.dot(mean_cam);
    p.center_distance = mean_cam.norm();
    return p;
}

struct Frame {
    std::vector<Prepared> splats;  // sorted front to back
};

Frame prepare_frame(const GaussianScene& scene, const CameraModel& cam, const RenderOptions& opt) {
    cam.validate();
    opt.validate();
    const Vec3 center = cam.center();
    std::vector<std::optional<Prepared>> staged(scene.size());
    parallel_for(scene.size(), [&](std::size_t i) { staged[i] = prepare(scene, i, cam, center, opt); });
    Frame f;
    for (auto& s : staged) {
        if (s) {
            f.splats.push_back(std::move(*s));
        }
    }
    std::sort(f.splats.begin(), f.splats.end(), [](const Prepared& a, const Prepared& b) {
        if (a.view_depth != b.view_depth) {
            return a.view_depth < b.view_depth;
        }
        return a.index < b.index;
    });
    return f;
}

/// Front-to-back compositing of one pixel over an ordered candidate list.
/// visit(prepared, alpha, transmittance_before) is called for each contributor.
template <typename Visit>
double composite_pixel(const Frame& frame, const std::vector<std::uint32_t>& candidates, int x, int y,
                       const RenderOptions& opt, Visit&& visit) {
    const double px = x + 0.5;
    const double py = y + 0.5;
    double transmittance = 1.0;
    for (const std::uint32_t k : candidates) {
        const Prepared& p = frame.splats[k];
        if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) {
            continue;
        }
        const double dx = px - p.mx;
        const double dy = py - p.my;
        const double power = -0.5 * (p.conic_a * dx * dx + p.conic_c * dy * dy) - p.conic_b * dx * dy;
        if (power > 0.0) {
            continue;
        }
        const double alpha = std::min(opt.alpha_clamp, p.opacity * std::exp(power));
        if (alpha < opt.alpha_cutoff) {
            continue;
        }
        visit(p, alpha, transmittance);
        transmittance *= 1.0 - alpha;
        if (transmittance < opt.transmittance_stop) {
            break;
        }
    }
    return transmittance;
}

std::vector<std::vector<std::uint32_t>> bin_tiles(const Frame& frame, int tiles_x, int tiles_y) {
    std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t k = 0; k < frame.splats.size(); ++k) {
        const Prepared& p = frame.splats[k];
        for (int ty = p.y0 / kTileSize; ty <= p.y1 / kTileSize; ++ty) {
            for (int tx = p.x0 / kTileSize; tx <= p.x1 / kTileSize; ++tx) {
                tiles[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
            }
        }
    }
    return tiles;
}

}  // namespace

void RenderOptions::validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(alpha_cutoff) || !in_unit(transmittance_stop) || !in_unit(alpha_clamp) || !in_unit(alpha_floor)) {
        throw ValidationError("render thresholds must lie in (0, 1)");
    }
    if (cov_regularization < 0.0 || near_plane <= 0.0) {
        throw ValidationError("render regularization must be >= 0 and near plane > 0");
    }
}

std::optional<ProjectedSplat> project_splat(const SplatRecord& splat, const CameraModel& camera,
                                            const RenderOptions& options) {
    const Vec3 t = camera.to_camera(splat.mean);
    if (t.z() <= options.near_plane) {
        return std::nullopt;
    }
    const double inv_z = 1.0 / t.z();
    // The linearization is taken at a point clamped to 1.3x the frustum, as
    // in reference 3DGS. Splats far outside the view would otherwise get
    // footprints that grow without bound as they approach the image plane.
    const double lim_x = 1.3 * 0.5 * camera.width / camera.fx;
    const double lim_y = 1.3 * 0.5 * camera.height / camera.fy;
    const double jx = std::clamp(t.x() * inv_z, -lim_x, lim_x) * t.z();
    const double jy = std::clamp(t.y() * inv_z, -lim_y, lim_y) * t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx * inv_z, 0.0, -camera.fx * jx * inv_z * inv_z,
           0.0, camera.fy * inv_z, -camera.fy * jy * inv_z * inv_z;
    const Eigen::Matrix<double, 2, 3> m = jac * camera.rotation;
    Mat2 cov = m * splat_covariance(splat, options.flatten_for_depth) * m.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += options.cov_regularization;
    cov(1, 1) += options.cov_regularization;
    return ProjectedSplat{Vec2(camera.fx * t.x() * inv_z + camera.cx, camera.fy * t.y() * inv_z + camera.cy), cov,
                          t.z()};
}

RenderOutput render(const GaussianScene& scene, const CameraModel& camera, const RenderOptions& options) {
    const Frame frame = prepare_frame(scene, camera, options);
    const int w = camera.width;
    const int h = camera.height;
    const int tiles_x = (w + kTileSize - 1) / kTileSize;
    const int tiles_y = (h + kTileSize - 1) / kTileSize;
    const auto tiles = bin_tiles(frame, tiles_x, tiles_y);

    RenderOutput out;
    out.rgb = Image(w, h, 3);
    out.alpha = Image(w, h, 1);
    out.depth = Image(w, h, 1, kInvalidDepth);
    out.plane_distance = Image(w, h, 1);
    out.normal = Image(w, h, 3);
    out.gray = Image(w, h, 1);
    out.mean_depth = Image(w, h, 1, kInvalidDepth);

    parallel_for(tiles.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % tiles_x);
        const int ty = static_cast<int>(tile / tiles_x);
        const auto& candidates = tiles[tile];
        for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
            for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
                Vec3 color = Vec3::Zero();
                Vec3 normal_sum = Vec3::Zero();
                double plane_sum = 0.0;
                double center_sum = 0.0;
                const double t_final = composite_pixel(frame, candidates, x, y, options,
                                                       [&](const Prepared& p, double a, double t) {
                                                           const double wgt = a * t;
                                                           color += wgt * p.color;
                                                           normal_sum += wgt * p.normal;
                                                           plane_sum += wgt * p.plane_distance;
                                                           center_sum += wgt * p.center_distance;
                                                       });
                const double acc = 1.0 - t_final;
                color += t_final * options.background;
                for (int c = 0; c < 3; ++c) {
                    out.rgb.at(x, y, c) = color[c];
                }
                out.alpha.at(x, y) = acc;
                out.gray.at(x, y) = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2];
                if (acc <= options.alpha_floor) {
                    continue;
                }
                const Vec3 ray = camera.pixel_ray(x, y);
                out.mean_depth.at(x, y) = center_sum / acc / ray.norm();
                const double nn = normal_sum.norm();
                if (nn <= 0.0) {
                    continue;
                }
                const Vec3 n = normal_sum / nn;
                const double d = plane_sum / acc;
                for (int c = 0; c < 3; ++c) {
                    out.normal.at(x, y, c) = n[c];
                }
                out.plane_distance.at(x, y) = d;
                const double cosine = -n.dot(ray) / ray.norm();
                if (cosine < options.grazing_epsilon) {
                    continue;
                }
                const double depth = d / -n.dot(ray);
                if (depth > 0.0) {
                    out.depth.at(x, y) = depth;
                }
            }
        }
    });
    return out;
}

DepthMaps render_depth_unbiased(const GaussianScene& scene, const CameraModel& camera, const RenderOptions& options) {
    RenderOutput r = render(scene, camera, options);
    return {std::move(r.depth), std::move(r.plane_distance), std::move(r.normal)};
}

std::vector<PixelContribution> trace_pixel(const GaussianScene& scene, const CameraModel& camera, int x, int y,
                                           const RenderOptions& options) {
    if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) {
        throw ValidationError("trace_pixel: pixel outside the image");
    }
    const Frame frame = prepare_frame(scene, camera, options);
    std::vector<std::uint32_t> all(frame.splats.size());
    std::iota(all.begin(), all.end(), 0u);
    std::vector<PixelContribution> trace;
    composite_pixel(frame, all, x, y, options, [&](const Prepared& p, double a, double t) {
        trace.push_back({p.index, a, t});
    });
    return trace;
}

Image to_grayscale(const Image& rgb) {
    if (rgb.channels != 3) {
        throw ValidationError("grayscale conversion needs a 3-channel image");
    }
    Image g(rgb.width, rgb.height, 1);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        g.data[i] = 0.299 * rgb.data[3 * i] + 0.587 * rgb.data[3 * i + 1] + 0.114 * rgb.data[3 * i + 2];
    }
    return g;
}

}  // namespace gsforge
