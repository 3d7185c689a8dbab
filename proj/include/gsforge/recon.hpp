// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/common.hpp"
#include "gsforge/rasterizer.hpp"
#include "gsforge/splat.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsforge {

/// Mean over splats of the smallest activated scale. Throws on an empty scene.
[[nodiscard]] double scale_loss(const GaussianScene& scene);

/// Monocular depth with a sparse SfM depth map. A pixel takes part in the
/// alignment where mask > 0.5; an empty mask selects sfm > 0.
struct DepthPriorPair {
    Image mono;
    Image sfm;
    Image mask;
};

struct DepthAlignment {
    double scale = 1.0;
    double shift = 0.0;
    Image aligned;  // scale * mono + shift
    std::size_t samples = 0;
};

/// Closed-form least squares for scale * mono + shift ~= sfm over the mask.
/// Throws DegenerateError when fewer than two samples or mono is constant.
[[nodiscard]] DepthAlignment align_mono_depth(const DepthPriorPair& pair);

/// Square patch of odd side length centered on pixel (x, y).
struct Patch {
    int x = 0;
    int y = 0;
};

/// Plane n . X + distance = 0 in the reference camera frame, n facing the camera.
struct PatchPlane {
    Vec3 normal = -Vec3::UnitZ();
    double distance = 1.0;
};

struct NccOptions {
    int patch_size = 11;
    int stride = 8;
    double min_alpha = 0.5;
    /// Patches whose variance falls below this in either image are skipped.
    double min_variance = 1e-10;
};

struct NccResult {
    double loss = 0.0;             // mean of (1 - NCC) over used patches; 0 if none
    std::size_t used = 0;
    std::size_t flat_skipped = 0;  // zero-variance patches
    std::size_t outside_skipped = 0;
};

/// Patch centers on a stride grid, fully inside the image, with alpha above
/// the threshold at the center.
[[nodiscard]] std::vector<Patch> select_patches(const Image& alpha, const NccOptions& options = {});

/// Per-patch planes read from rendered normals and plane distances at the
/// patch centers.
[[nodiscard]] std::vector<PatchPlane> patch_planes(const Image& normal, const Image& plane_distance,
                                                   std::span<const Patch> patches);

/// Homography from reference to neighbor pixels induced by a reference-frame plane.
[[nodiscard]] Mat3 plane_homography(const CameraModel& reference, const CameraModel& neighbor,
                                    const PatchPlane& plane);

/// Bilinear sample at image coordinates (pixel centers at +0.5).
[[nodiscard]] double sample_bilinear(const Image& gray, double u, double v);

/// Multi-view patch NCC: each reference patch is warped into the neighbor
/// through its plane homography and scored with mean/variance normalization.
[[nodiscard]] NccResult ncc_loss(const Image& reference_gray, const CameraModel& reference_camera,
                                 const Image& neighbor_gray, const CameraModel& neighbor_camera,
                                 std::span<const Patch> patches, std::span<const PatchPlane> planes,
                                 const NccOptions& options = {});

/// Mean (1 - cos) over pixels where both normal maps are nonzero.
[[nodiscard]] double normal_prior_loss(const Image& rendered, const Image& prior);

/// Mean absolute difference over pixels where both depths are positive and finite.
[[nodiscard]] double depth_prior_loss(const Image& rendered, const Image& prior);

/// Mean absolute difference over all samples.
[[nodiscard]] double photometric_l1(const Image& image, const Image& reference);

/// 10 log10(1 / MSE); +infinity for identical images.
[[nodiscard]] double psnr(const Image& image, const Image& reference);

struct LossWeights {
    double photometric = 1.0;
    double scale = 100.0;
    double depth = 0.1;
    double normal = 0.05;
    double ncc = 0.2;

    void validate() const;
};

struct TargetView {
    CameraModel camera;
    Image rgb;
    std::optional<Image> depth;   // aligned depth prior
    std::optional<Image> normal;  // camera-space normal prior
};

struct LossBreakdown {
    double total = 0.0;
    double photometric = 0.0;
    double scale = 0.0;
    double depth = 0.0;
    double normal = 0.0;
    double ncc = 0.0;
};

/// Composite objective averaged over views. NCC pairs each view with the next
/// one (cyclically) and warps the target images through rendered planes.
[[nodiscard]] LossBreakdown scene_loss(const GaussianScene& scene, std::span<const TargetView> views,
                                       const LossWeights& weights, const RenderOptions& render_options = {});

/// Render settings for finite-difference fitting. The default 1/255 alpha
/// cutoff and early termination make the loss jump when a splat edge crosses a
/// pixel, which swamps central differences; these cutoffs keep the jumps far
/// below the gradient resolution.
[[nodiscard]] RenderOptions smooth_render_options();

/// Flat parameter vector: per splat mean, log scale, quaternion (w, x, y, z),
/// opacity logit and SH coefficients.
[[nodiscard]] std::vector<double> pack_parameters(const GaussianScene& scene);
[[nodiscard]] GaussianScene unpack_parameters(const GaussianScene& like, std::span<const double> params);

struct FitOptions {
    LossWeights weights;
    RenderOptions render = smooth_render_options();
    int iterations = 300;
    double step_size = 0.02;
    double fd_relative = 1e-4;
    double fd_floor = 1e-6;
    int max_halvings = 5;
    /// Divide each gradient component by its running RMS so parameters of
    /// different units move at comparable rates. step_size is then roughly
    /// the per-parameter move.
    bool rms_normalize = true;
    double rms_decay = 0.99;
    /// Exponential average of gradients used as the search direction. It is
    /// reset to the plain gradient whenever the line search fails.
    double momentum = 0.9;
};

struct FitTraceEntry {
    int iteration = 0;
    LossBreakdown loss;
    double step = 0.0;
};

struct FitResult {
    GaussianScene scene;
    std::vector<FitTraceEntry> trace;
    int accepted_steps = 0;
};

/// Central finite-difference gradient of an objective over a parameter vector.
[[nodiscard]] std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                                             std::span<const double> params, double relative,
                                                             double floor);

/// Gradient descent with finite-difference gradients. A step is accepted only
/// when the loss drops; otherwise it is halved up to max_halvings times. The
/// next iteration starts from twice the last accepted step, capped at
/// step_size.
[[nodiscard]] FitResult fit_scene(const GaussianScene& initial, std::span<const TargetView> views,
                                  const FitOptions& options);

/// Reads a JSON array of {camera, rgb_path, depth_path?, normal_path?}.
/// rgb is PNG; depth and normal are float rasters. Relative paths resolve
/// against the manifest's directory.
[[nodiscard]] std::vector<TargetView> load_target_views(const std::filesystem::path& manifest);

void write_trace_csv(std::span<const FitTraceEntry> trace, const std::filesystem::path& path);

}  // namespace gsforge
