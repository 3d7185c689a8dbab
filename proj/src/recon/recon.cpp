// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/recon.hpp"

#include "gsforge/image_io.hpp"
#include "gsforge/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace gsforge {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": image shapes differ (" + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                              std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                              std::to_string(b.channels) + ")");
    }
}

bool valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

}  // namespace

double scale_loss(const GaussianScene& scene) {
    if (scene.empty()) {
        throw ValidationError("scale_loss: empty scene");
    }
    double sum = 0.0;
    for (const auto& s : scene.splats()) {
        sum += std::exp(s.log_scale.minCoeff());
    }
    return sum / static_cast<double>(scene.size());
}

DepthAlignment align_mono_depth(const DepthPriorPair& pair) {
    require_same_shape(pair.mono, pair.sfm, "align_mono_depth");
    const bool explicit_mask = !pair.mask.data.empty();
    if (explicit_mask && (pair.mask.width != pair.mono.width || pair.mask.height != pair.mono.height)) {
        throw ValidationError("align_mono_depth: mask size differs from the depth maps");
    }
    if (pair.mono.channels != 1) {
        throw ValidationError("align_mono_depth: depth maps must have one channel");
    }
    // Centered sums keep the normal equations well conditioned.
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pair.mono.data.size(); ++i) {
        const bool on = explicit_mask ? pair.mask.data[i] > 0.5 : valid_depth(pair.sfm.data[i]);
        if (on && std::isfinite(pair.mono.data[i]) && std::isfinite(pair.sfm.data[i])) {
            idx.push_back(i);
        }
    }
    if (idx.size() < 2) {
        throw DegenerateError("align_mono_depth: need at least two valid pixels, found " +
                              std::to_string(idx.size()));
    }
    const auto n = static_cast<double>(idx.size());
    double mx = 0.0;
    double my = 0.0;
    for (auto i : idx) {
        mx += pair.mono.data[i];
        my += pair.sfm.data[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (auto i : idx) {
        const double dx = pair.mono.data[i] - mx;
        sxx += dx * dx;
        sxy += dx * (pair.sfm.data[i] - my);
    }
    if (!(sxx > 1e-12 * std::max(1.0, mx * mx) * n)) {
        throw DegenerateError("align_mono_depth: monocular depth is constant over the mask");
    }
    DepthAlignment out;
    out.scale = sxy / sxx;
    out.shift = my - out.scale * mx;
    out.samples = idx.size();
    out.aligned = pair.mono;
    for (auto& v : out.aligned.data) {
        v = out.scale * v + out.shift;
    }
    return out;
}

std::vector<Patch> select_patches(const Image& alpha, const NccOptions& options) {
    if (options.patch_size < 3 || options.patch_size % 2 == 0 || options.stride < 1) {
        throw ValidationError("NCC patches need an odd size >= 3 and a positive stride");
    }
    const int half = options.patch_size / 2;
    std::vector<Patch> patches;
    for (int y = half; y + half < alpha.height; y += options.stride) {
        for (int x = half; x + half < alpha.width; x += options.stride) {
            if (alpha.at(x, y) > options.min_alpha) {
                patches.push_back({x, y});
            }
        }
    }
    return patches;
}

std::vector<PatchPlane> patch_planes(const Image& normal, const Image& plane_distance, std::span<const Patch> patches) {
    std::vector<PatchPlane> planes;
    planes.reserve(patches.size());
    for (const auto& p : patches) {
        PatchPlane plane;
        plane.normal = Vec3(normal.at(p.x, p.y, 0), normal.at(p.x, p.y, 1), normal.at(p.x, p.y, 2));
        plane.distance = plane_distance.at(p.x, p.y);
        planes.push_back(plane);
    }
    return planes;
}

Mat3 plane_homography(const CameraModel& reference, const CameraModel& neighbor, const PatchPlane& plane) {
    const Mat3 r = neighbor.rotation * reference.rotation.transpose();
    const Vec3 t = neighbor.translation - r * reference.translation;
    return neighbor.intrinsics() * (r - t * plane.normal.transpose() / plane.distance) *
           reference.intrinsics_inverse();
}

double sample_bilinear(const Image& gray, double u, double v) {
    const double px = u - 0.5;
    const double py = v - 0.5;
    const int x0 = std::clamp(static_cast<int>(std::floor(px)), 0, gray.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(py)), 0, gray.height - 1);
    const int x1 = std::min(x0 + 1, gray.width - 1);
    const int y1 = std::min(y0 + 1, gray.height - 1);
    const double fx = std::clamp(px - x0, 0.0, 1.0);
    const double fy = std::clamp(py - y0, 0.0, 1.0);
    const double top = (1 - fx) * gray.at(x0, y0) + fx * gray.at(x1, y0);
    const double bottom = (1 - fx) * gray.at(x0, y1) + fx * gray.at(x1, y1);
    return (1 - fy) * top + fy * bottom;
}

NccResult ncc_loss(const Image& reference_gray, const CameraModel& reference_camera, const Image& neighbor_gray,
                   const CameraModel& neighbor_camera, std::span<const Patch> patches,
                   std::span<const PatchPlane> planes, const NccOptions& options) {
    if (reference_gray.channels != 1 || neighbor_gray.channels != 1) {
        throw ValidationError("ncc_loss: images must be single-channel gray");
    }
    if (patches.size() != planes.size()) {
        throw ValidationError("ncc_loss: one plane per patch required");
    }
    const int half = options.patch_size / 2;
    const int count = options.patch_size * options.patch_size;
    NccResult result;
    double sum = 0.0;
    std::vector<double> a(static_cast<std::size_t>(count));
    std::vector<double> b(static_cast<std::size_t>(count));
    for (std::size_t p = 0; p < patches.size(); ++p) {
        const Patch& patch = patches[p];
        const PatchPlane& plane = planes[p];
        if (patch.x - half < 0 || patch.y - half < 0 || patch.x + half >= reference_gray.width ||
            patch.y + half >= reference_gray.height || !(std::abs(plane.distance) > 0.0) ||
            !plane.normal.allFinite()) {
            ++result.outside_skipped;
            continue;
        }
        const Mat3 h = plane_homography(reference_camera, neighbor_camera, plane);
        bool inside = true;
        std::size_t k = 0;
        for (int dy = -half; dy <= half && inside; ++dy) {
            for (int dx = -half; dx <= half && inside; ++dx, ++k) {
                const int x = patch.x + dx;
                const int y = patch.y + dy;
                const Vec3 q = h * Vec3(x + 0.5, y + 0.5, 1.0);
                if (!(q.z() > 0.0)) {
                    inside = false;
                    break;
                }
                const double u = q.x() / q.z();
                const double v = q.y() / q.z();
                if (!(u >= 0.5 && v >= 0.5 && u <= neighbor_gray.width - 0.5 && v <= neighbor_gray.height - 0.5)) {
                    inside = false;
                    break;
                }
                a[k] = reference_gray.at(x, y);
                b[k] = sample_bilinear(neighbor_gray, u, v);
            }
        }
        if (!inside) {
            ++result.outside_skipped;
            continue;
        }
        double ma = 0.0;
        double mb = 0.0;
        for (int i = 0; i < count; ++i) {
            ma += a[static_cast<std::size_t>(i)];
            mb += b[static_cast<std::size_t>(i)];
        }
        ma /= count;
        mb /= count;
        double saa = 0.0;
        double sbb = 0.0;
        double sab = 0.0;
        for (int i = 0; i < count; ++i) {
            const double da = a[static_cast<std::size_t>(i)] - ma;
            const double db = b[static_cast<std::size_t>(i)] - mb;
            saa += da * da;
            sbb += db * db;
            sab += da * db;
        }
        if (saa / count < options.min_variance || sbb / count < options.min_variance) {
            ++result.flat_skipped;
            continue;
        }
        const double ncc = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
        sum += 1.0 - ncc;
        ++result.used;
    }
    result.loss = result.used > 0 ? sum / static_cast<double>(result.used) : 0.0;
    return result;
}

double normal_prior_loss(const Image& rendered, const Image& prior) {
    require_same_shape(rendered, prior, "normal_prior_loss");
    if (rendered.channels != 3) {
        throw ValidationError("normal_prior_loss: normal maps need three channels");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        const Vec3 a(rendered.data[3 * p], rendered.data[3 * p + 1], rendered.data[3 * p + 2]);
        const Vec3 b(prior.data[3 * p], prior.data[3 * p + 1], prior.data[3 * p + 2]);
        const double na = a.norm();
        const double nb = b.norm();
        if (!(na > 0.0) || !(nb > 0.0) || !std::isfinite(na) || !std::isfinite(nb)) {
            continue;
        }
        sum += 1.0 - a.dot(b) / (na * nb);
        ++n;
    }
    if (n == 0) {
        throw ValidationError("normal_prior_loss: no pixel has both normals defined");
    }
    return sum / static_cast<double>(n);
}

double depth_prior_loss(const Image& rendered, const Image& prior) {
    require_same_shape(rendered, prior, "depth_prior_loss");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        if (valid_depth(rendered.data[i]) && valid_depth(prior.data[i])) {
            sum += std::abs(rendered.data[i] - prior.data[i]);
            ++n;
        }
    }
    if (n == 0) {
        throw ValidationError("depth_prior_loss: no pixel has both depths defined");
    }
    return sum / static_cast<double>(n);
}

double photometric_l1(const Image& image, const Image& reference) {
    require_same_shape(image, reference, "photometric_l1");
    if (image.data.empty()) {
        throw ValidationError("photometric_l1: empty images");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        sum += std::abs(image.data[i] - reference.data[i]);
    }
    return sum / static_cast<double>(image.data.size());
}

double psnr(const Image& image, const Image& reference) {
    require_same_shape(image, reference, "psnr");
    if (image.data.empty()) {
        throw ValidationError("psnr: empty images");
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const double d = image.data[i] - reference.data[i];
        sse += d * d;
    }
    if (sse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(static_cast<double>(image.data.size()) / sse);
}

void LossWeights::validate() const {
    for (double w : {photometric, scale, depth, normal, ncc}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ValidationError("loss weights must be finite and nonnegative");
        }
    }
    if (photometric + scale + depth + normal + ncc <= 0.0) {
        throw ValidationError("at least one loss weight must be positive");
    }
}

RenderOptions smooth_render_options() {
    RenderOptions options;
    options.alpha_cutoff = 1e-6;
    options.transmittance_stop = 1e-9;
    return options;
}

LossBreakdown scene_loss(const GaussianScene& scene, std::span<const TargetView> views, const LossWeights& weights,
                         const RenderOptions& render_options) {
    if (views.empty()) {
        throw ValidationError("scene_loss: no target views");
    }
    std::vector<RenderOutput> renders;
    renders.reserve(views.size());
    for (const auto& v : views) {
        renders.push_back(render(scene, v.camera, render_options));
    }
    LossBreakdown out;
    const auto nv = static_cast<double>(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        out.photometric += photometric_l1(renders[i].rgb, views[i].rgb) / nv;
        if (weights.depth > 0.0 && views[i].depth) {
            try {
                out.depth += depth_prior_loss(renders[i].depth, *views[i].depth) / nv;
            } catch (const ValidationError&) {
                // No overlap in this view: the prior has nothing to say.
            }
        }
        if (weights.normal > 0.0 && views[i].normal) {
            try {
                out.normal += normal_prior_loss(renders[i].normal, *views[i].normal) / nv;
            } catch (const ValidationError&) {
            }
        }
        if (weights.ncc > 0.0 && views.size() > 1) {
            const std::size_t j = (i + 1) % views.size();
            const auto patches = select_patches(renders[i].alpha);
            const auto planes = patch_planes(renders[i].normal, renders[i].plane_distance, patches);
            out.ncc += ncc_loss(to_grayscale(views[i].rgb), views[i].camera, to_grayscale(views[j].rgb),
                                views[j].camera, patches, planes)
                           .loss /
                       nv;
        }
    }
    if (weights.scale > 0.0 && !scene.empty()) {
        out.scale = scale_loss(scene);
    }
    out.total = weights.photometric * out.photometric + weights.scale * out.scale + weights.depth * out.depth +
                weights.normal * out.normal + weights.ncc * out.ncc;
    return out;
}

std::vector<double> pack_parameters(const GaussianScene& scene) {
    std::vector<double> p;
    for (const auto& s : scene.splats()) {
        p.insert(p.end(), s.mean.data(), s.mean.data() + 3);
        p.insert(p.end(), s.log_scale.data(), s.log_scale.data() + 3);
        p.insert(p.end(), {s.rotation.w(), s.rotation.x(), s.rotation.y(), s.rotation.z()});
        p.push_back(s.opacity_logit);
        for (const auto& c : s.sh) {
            p.insert(p.end(), c.data(), c.data() + 3);
        }
    }
    return p;
}

GaussianScene unpack_parameters(const GaussianScene& like, std::span<const double> params) {
    const std::size_t per = 11 + 3 * static_cast<std::size_t>(sh_coeff_count(like.sh_degree()));
    if (params.size() != per * like.size()) {
        throw ValidationError("unpack_parameters: expected " + std::to_string(per * like.size()) +
                              " parameters, got " + std::to_string(params.size()));
    }
    std::vector<SplatRecord> splats = like.splats();
    const double* p = params.data();
    for (auto& s : splats) {
        s.mean = Vec3(p[0], p[1], p[2]);
        s.log_scale = Vec3(p[3], p[4], p[5]);
        Quat q(p[6], p[7], p[8], p[9]);
        s.rotation = q.norm() > 1e-12 ? q.normalized() : Quat::Identity();
        s.opacity_logit = p[10];
        p += 11;
        for (auto& c : s.sh) {
            c = Vec3(p[0], p[1], p[2]);
            p += 3;
        }
    }
    return GaussianScene(std::move(splats), like.sh_degree(), like.labels());
}

std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                               std::span<const double> params, double relative, double floor) {
    std::vector<double> grad(params.size(), 0.0);
    parallel_for(params.size(), [&](std::size_t i) {
        std::vector<double> x(params.begin(), params.end());
        const double h = std::max(relative * std::abs(params[i]), floor);
        x[i] = params[i] + h;
        const double up = f(x);
        x[i] = params[i] - h;
        const double down = f(x);
        grad[i] = (up - down) / (2.0 * h);
    });
    return grad;
}

FitResult fit_scene(const GaussianScene& initial, std::span<const TargetView> views, const FitOptions& options) {
    options.weights.validate();
    if (!(options.step_size > 0.0) || options.iterations < 0 || options.max_halvings < 0) {
        throw ValidationError("fit_scene: step size must be positive and counts nonnegative");
    }
    if (!(options.momentum >= 0.0 && options.momentum < 1.0) || !(options.rms_decay > 0.0 && options.rms_decay < 1.0)) {
        throw ValidationError("fit_scene: momentum must lie in [0, 1) and rms_decay in (0, 1)");
    }
    auto loss_at = [&](std::span<const double> x) {
        return scene_loss(unpack_parameters(initial, x), views, options.weights, options.render);
    };
    std::vector<double> theta = pack_parameters(initial);
    LossBreakdown current = loss_at(theta);
    if (!std::isfinite(current.total)) {
        throw ValidationError("fit_scene: initial loss is not finite");
    }
    FitResult result;
    result.trace.push_back({0, current, 0.0});
    double step = options.step_size;
    const auto total = [&](std::span<const double> x) { return loss_at(x).total; };
    std::vector<double> grad;
    std::vector<double> direction(theta.size(), 0.0);
    std::vector<double> second_moment(theta.size(), 0.0);
    std::vector<double> first_moment(theta.size(), 0.0);
    int fresh_gradients = 0;
    int momentum_steps = 0;
    bool stale = true;
    for (int it = 1; it <= options.iterations; ++it) {
        if (stale) {
            grad = finite_difference_gradient(total, theta, options.fd_relative, options.fd_floor);
            stale = false;
            ++fresh_gradients;
            const double correction = 1.0 - std::pow(options.rms_decay, fresh_gradients);
            ++momentum_steps;
            const double momentum_correction = 1.0 - std::pow(options.momentum, momentum_steps);
            for (std::size_t i = 0; i < theta.size(); ++i) {
                first_moment[i] = options.momentum * first_moment[i] + (1.0 - options.momentum) * grad[i];
                direction[i] = first_moment[i] / momentum_correction;
                if (options.rms_normalize) {
                    second_moment[i] =
                        options.rms_decay * second_moment[i] + (1.0 - options.rms_decay) * grad[i] * grad[i];
                    direction[i] /= std::sqrt(second_moment[i] / correction) + 1e-12;
                }
            }
        }
        std::vector<double> trial(theta.size());
        bool accepted = false;
        double tried = step;
        for (int h = 0; h <= options.max_halvings; ++h, tried *= 0.5) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                trial[i] = theta[i] - tried * direction[i];
            }
            const LossBreakdown next = loss_at(trial);
            if (std::isfinite(next.total) && next.total < current.total) {
                theta = trial;
                current = next;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            step = tried;
            if (options.momentum > 0.0 && momentum_steps > 1) {
                // The accumulated direction no longer descends here. Restart
                // from the plain gradient at the same point.
                momentum_steps = 1;
                const double correction = 1.0 - std::pow(options.rms_decay, fresh_gradients);
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    first_moment[i] = (1.0 - options.momentum) * grad[i];
                    direction[i] = grad[i];
                    if (options.rms_normalize) {
                        direction[i] /= std::sqrt(second_moment[i] / correction) + 1e-12;
                    }
                }
                step = options.step_size;
            }
            continue;
        }
        stale = true;
        ++result.accepted_steps;
        result.trace.push_back({it, current, tried});
        step = std::min(2.0 * tried, options.step_size);
    }
    result.scene = unpack_parameters(initial, theta);
    return result;
}

std::vector<TargetView> load_target_views(const std::filesystem::path& manifest) {
    const Json j = read_json_file(manifest);
    if (!j.is_array() || j.empty()) {
        throw ParseError(manifest.string() + ": expected a nonempty array of views");
    }
    const auto base = manifest.parent_path();
    auto resolve = [&](const Json& v, const char* key) {
        const std::filesystem::path p = v.at(key).get<std::string>();
        return p.is_absolute() ? p : base / p;
    };
    std::vector<TargetView> views;
    for (const auto& v : j) {
        try {
            TargetView view;
            view.camera = camera_from_json(v.at("camera"));
            view.rgb = read_png(resolve(v, "rgb_path"));
            if (v.contains("depth_path")) {
                view.depth = read_float_raster(resolve(v, "depth_path"));
            }
            if (v.contains("normal_path")) {
                view.normal = read_float_raster(resolve(v, "normal_path"));
            }
            if (view.rgb.width != view.camera.width || view.rgb.height != view.camera.height) {
                throw ValidationError("rgb image size does not match the camera");
            }
            views.push_back(std::move(view));
        } catch (const Json::exception& e) {
            throw ParseError(manifest.string() + ": " + e.what());
        }
    }
    return views;
}

void write_trace_csv(std::span<const FitTraceEntry> trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.precision(17);
    out << "iteration,total,photometric,scale,depth,normal,ncc,step\n";
    for (const auto& e : trace) {
        out << e.iteration << ',' << e.loss.total << ',' << e.loss.photometric << ',' << e.loss.scale << ','
            << e.loss.depth << ',' << e.loss.normal << ',' << e.loss.ncc << ',' << e.step << '\n';
    }
}

}  // namespace gsforge
