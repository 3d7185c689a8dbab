// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include "gsforge/compose.hpp"
#include "gsforge/rasterizer.hpp"
#include "gsforge/sh_rotation.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

using namespace gsforge;
using namespace gsforge::testing;

namespace {

std::vector<Vec3> random_points(Rng& rng, std::size_t n) {
    std::vector<Vec3> p(n);
    for (auto& v : p) {
        v = random_vec(rng, -1, 1);
    }
    return p;
}

bool scenes_equal(const GaussianScene& a, const GaussianScene& b, double tol) {
    if (a.size() != b.size() || a.sh_degree() != b.sh_degree()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a[i];
        const auto& y = b[i];
        if ((x.mean - y.mean).cwiseAbs().maxCoeff() > tol || (x.log_scale - y.log_scale).cwiseAbs().maxCoeff() > tol ||
            (x.rotation.coeffs() - y.rotation.coeffs()).cwiseAbs().maxCoeff() > tol ||
            std::abs(x.opacity_logit - y.opacity_logit) > tol) {
            return false;
        }
        for (std::size_t k = 0; k < x.sh.size(); ++k) {
            if ((x.sh[k] - y.sh[k]).cwiseAbs().maxCoeff() > tol) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

TEST_CASE("fit_similarity: identity on identical points") {
    Rng rng(1);
    const auto pts = random_points(rng, 4);
    const auto fit = fit_similarity(pts, pts);
    CHECK((fit.transform.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fit.transform.translation.norm() < 1e-12);
    CHECK(fit.transform.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.rms_residual < 1e-12);
}

TEST_CASE("fit_similarity: recovers constructed transforms") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto truth = random_similarity(rng);
        const auto src = random_points(rng, 4 + static_cast<std::size_t>(trial % 5));
        std::vector<Vec3> dst;
        for (const auto& p : src) {
            dst.push_back(truth.apply(p));
        }
        const auto fit = fit_similarity(src, dst);
        CHECK((fit.transform.rotation - truth.rotation).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((fit.transform.translation - truth.translation).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(std::abs(fit.transform.scale - truth.scale) <= 1e-9);
        CHECK(fit.rms_residual <= 1e-9);
    }
}

TEST_CASE("fit_similarity: one perturbed point bounds the residual") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto truth = random_similarity(rng);
        const auto src = random_points(rng, 5);
        std::vector<Vec3> dst;
        for (const auto& p : src) {
            dst.push_back(truth.apply(p));
        }
        const Vec3 delta = random_vec(rng, -0.1, 0.1);
        dst[2] += delta;
        const auto fit = fit_similarity(src, dst);
        CHECK(fit.rms_residual > 0.0);
        CHECK(fit.rms_residual <= delta.norm());
    }
}

TEST_CASE("fit_similarity: minimizes the squared alignment cost") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto src = random_points(rng, 8);
        std::vector<Vec3> dst;
        const auto truth = random_similarity(rng);
        for (const auto& p : src) {
            dst.push_back(truth.apply(p) + random_vec(rng, -0.05, 0.05));
        }
        const auto fit = fit_similarity(src, dst);
        const double best = alignment_cost(fit.transform, src, dst);
        for (int k = 0; k < 20; ++k) {
            SimilarityTransform p = fit.transform;
            p.rotation = Eigen::AngleAxisd(uniform(rng, -1e-3, 1e-3), random_unit(rng)).toRotationMatrix() * p.rotation;
            p.translation += random_vec(rng, -1e-3, 1e-3);
            p.scale *= 1.0 + uniform(rng, -1e-3, 1e-3);
            CHECK(alignment_cost(p, src, dst) >= best);
        }
    }
}

TEST_CASE("fit_similarity: degenerate inputs") {
    const std::vector<Vec3> planar = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}};
    CHECK_THROWS_AS(fit_similarity(planar, planar), DegenerateError);
    const std::vector<Vec3> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS(fit_similarity(three, three), DegenerateError);
}

TEST_CASE("fit_similarity: mirrored targets still yield a proper rotation") {
    Rng rng(5);
    const auto src = random_points(rng, 6);
    std::vector<Vec3> dst;
    for (const auto& p : src) {
        dst.emplace_back(-p.x(), p.y(), p.z());
    }
    const auto fit = fit_similarity(src, dst);
    CHECK(fit.transform.rotation.determinant() == doctest::Approx(1.0));
    CHECK(fit.rms_residual > 0.0);
}

TEST_CASE("compose_relative") {
    Rng rng(6);
    const auto base = random_similarity(rng);
    const auto same = compose_relative(base, Vec3::Zero());
    CHECK((same.matrix() - base.matrix()).cwiseAbs().maxCoeff() < 1e-15);
    const Vec3 delta = random_vec(rng, -1, 1);
    CHECK((compose_relative(SimilarityTransform::identity(), delta).translation - delta).norm() < 1e-15);
    const auto cone = compose_relative(base, delta);
    CHECK((cone.apply(Vec3::Zero()) - base.apply(delta)).norm() < 1e-12);
    CHECK(cone.scale == base.scale);
}

TEST_CASE("decompose_homogeneous") {
    const auto id = decompose_homogeneous(Mat4::Identity());
    CHECK(id.scale == 1.0);
    CHECK(id.rotation == Mat3::Identity());
    CHECK(id.translation == Vec3::Zero());

    Mat4 two = Mat4::Identity();
    two.topLeftCorner<3, 3>() *= 2.0;
    const auto d2 = decompose_homogeneous(two);
    CHECK(d2.scale == doctest::Approx(2.0).epsilon(1e-15));
    CHECK((d2.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);

    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const Mat4 m = random_similarity(rng).matrix();
        CHECK((decompose_homogeneous(m).matrix() - m).cwiseAbs().maxCoeff() <= 1e-9);
    }

    Mat4 stretched = Mat4::Identity();
    stretched(0, 0) = 2.0;
    CHECK_THROWS_WITH_AS(decompose_homogeneous(stretched), doctest::Contains("non-uniform"), ValidationError);
    Mat4 sheared = Mat4::Identity();
    sheared(0, 1) = 0.5;
    sheared(1, 1) = std::sqrt(0.75);  // unit columns, not orthogonal
    CHECK_THROWS_WITH_AS(decompose_homogeneous(sheared), doctest::Contains("shear"), ValidationError);
}

TEST_CASE("transform_scene: identity and pure scale") {
    Rng rng(8);
    const auto scene = random_scene(rng, 30, 3);
    CHECK(scenes_equal(transform_scene(scene, SimilarityTransform::identity()), scene, 1e-15));

    const auto scaled = transform_scene(scene, {Mat3::Identity(), Vec3::Zero(), 2.0});
    for (std::size_t i = 0; i < scene.size(); ++i) {
        CHECK((scaled[i].mean - 2.0 * scene[i].mean).norm() < 1e-15);
        CHECK((scaled[i].log_scale - scene[i].log_scale - Vec3::Constant(std::log(2.0))).norm() < 1e-14);
        CHECK(scaled[i].rotation.isApprox(scene[i].rotation, 1e-15));
        for (std::size_t k = 0; k < scene[i].sh.size(); ++k) {
            CHECK((scaled[i].sh[k] - scene[i].sh[k]).norm() < 1e-15);
        }
    }
}

TEST_CASE("transform_scene: covariance follows s^2 R Sigma R^T") {
    Rng rng(9);
    const auto scene = random_scene(rng, 50, 1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto t = random_similarity(rng, trial < 5 ? 1.0 : 0.5, trial < 5 ? 1.0 : 2.0);
        const auto moved = transform_scene(scene, t);
        for (std::size_t i = 0; i < scene.size(); ++i) {
            const Mat3 expected = t.scale * t.scale * t.rotation * scene[i].covariance() * t.rotation.transpose();
            CHECK((moved[i].covariance() - expected).cwiseAbs().maxCoeff() <= 1e-9);
            CHECK(moved[i].opacity_logit == scene[i].opacity_logit);
        }
    }
}

TEST_CASE("rotate_sh: identity, band 0 and equivariance") {
    Rng rng(10);
    const auto c = random_sh(rng, 3, 1.0);
    const auto same = rotate_sh(c, 3, Mat3::Identity());
    for (std::size_t k = 0; k < c.size(); ++k) {
        CHECK((same[k] - c[k]).norm() < 1e-14);
    }
    const std::vector<Vec3> dc = {Vec3(0.3, -0.1, 0.7)};
    CHECK(rotate_sh(dc, 0, random_rotation(rng))[0] == dc[0]);

    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const Mat3 r = random_rotation(rng);
        const auto coeffs = random_sh(rng, 3, 1.0);
        const auto rotated = rotate_sh(coeffs, 3, r);
        for (int k = 0; k < 64; ++k) {
            const Vec3 d = random_unit(rng);
            worst = std::max(worst, (eval_sh(rotated, 3, r * d) - eval_sh(coeffs, 3, d)).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("rotate_sh composes like the rotation group") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat3 r1 = random_rotation(rng);
        const Mat3 r2 = random_rotation(rng);
        const auto c = random_sh(rng, 3, 1.0);
        const auto twice = rotate_sh(rotate_sh(c, 3, r1), 3, r2);
        const auto once = rotate_sh(c, 3, r2 * r1);
        for (int k = 0; k < 64; ++k) {
            const Vec3 d = random_unit(rng);
            CHECK((eval_sh(twice, 3, d) - eval_sh(once, 3, d)).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
}

TEST_CASE("rotate_sh: band matrices are orthogonal") {
    Rng rng(12);
    const ShRotation rot(random_rotation(rng));
    for (int l = 0; l <= 3; ++l) {
        const auto& d = rot.band(l);
        CHECK((d * d.transpose() - Eigen::MatrixXd::Identity(2 * l + 1, 2 * l + 1)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("chain_object_transform") {
    const auto id = SimilarityTransform::identity();
    CHECK((chain_object_transform(id, id, id).matrix() - Mat4::Identity()).cwiseAbs().maxCoeff() == 0.0);
    const Vec3 u(0.5, -1.0, 2.0);
    CHECK(chain_object_transform(id, id, SimilarityTransform::from_translation(u)).translation == u);

    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_similarity(rng);
        const auto b = random_similarity(rng);
        const auto c = random_similarity(rng);
        const auto chain = chain_object_transform(a, b, c);
        for (int k = 0; k < 10; ++k) {
            const Vec3 p = random_vec(rng, -1, 1);
            const Vec3 seq = a.apply(b.apply(c.apply(p)));
            CHECK((chain.apply(p) - seq).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, seq.norm()));
        }
    }
}

TEST_CASE("crop_by_obb partitions by mean containment") {
    std::vector<SplatRecord> grid;
    for (int i = -3; i <= 3; ++i) {
        for (int j = -3; j <= 3; ++j) {
            for (int k = -3; k <= 3; ++k) {
                grid.push_back(solid_splat(Vec3(i, j, k) * 0.3 + Vec3(0.01, 0.02, 0.03), Vec3::Constant(0.05), 0.5,
                                           Vec3::Constant(0.5)));
            }
        }
    }
    const GaussianScene scene(grid, 0);
    OrientedBoundingBox box;
    box.half_extents = Vec3::Constant(0.5);
    const auto [in, out] = crop_by_obb(scene, box);
    CHECK(in.size() + out.size() == scene.size());
    std::size_t expected = 0;
    for (const auto& s : grid) {
        expected += (s.mean.cwiseAbs().array() <= 0.5).all() ? 1 : 0;
    }
    CHECK(in.size() == expected);
    for (const auto& s : in.splats()) {
        CHECK((s.mean.cwiseAbs().array() <= 0.5).all());
    }

    OrientedBoundingBox all;
    all.half_extents = Vec3::Constant(10.0);
    CHECK(crop_by_obb(scene, all).first.size() == scene.size());
    CHECK(crop_by_obb(scene, all).second.empty());
    OrientedBoundingBox far;
    far.center = Vec3(50, 0, 0);
    CHECK(crop_by_obb(scene, far).first.empty());

    box.half_extents.x() = 0.0;
    CHECK_THROWS_AS((void)crop_by_obb(scene, box), ValidationError);
}

TEST_CASE("crop then merge renders identically") {
    Rng rng(14);
    const auto scene = random_scene(rng, 400, 2, Vec3(-1, -1, 2), Vec3(1, 1, 4));
    OrientedBoundingBox box;
    box.center = Vec3(0.2, 0.0, 3.0);
    box.rotation = random_rotation(rng);
    box.half_extents = Vec3(0.6, 0.4, 0.5);
    const auto [in, out] = crop_by_obb(scene, box);
    const std::vector<GaussianScene> parts = {out, in};
    const auto cam = forward_camera(64, 48, 40.0);
    CHECK(max_abs_diff(render(merge_scenes(parts), cam).rgb, render(scene, cam).rgb) <= 1e-6);
}

TEST_CASE("merge_scenes: identity element, order independence, degree check") {
    Rng rng(15);
    const auto a = random_scene(rng, 200, 1, Vec3(-1, -1, 2), Vec3(1, 1, 3)).with_label("a");
    const auto b = random_scene(rng, 200, 1, Vec3(-1, -1, 2.5), Vec3(1, 1, 4)).with_label("b");
    const std::vector<GaussianScene> with_empty = {a, GaussianScene({}, 1)};
    CHECK(scenes_equal(merge_scenes(with_empty), a, 0.0));
    const auto cam = forward_camera(64, 48, 40.0);
    const std::vector<GaussianScene> ab = {a, b};
    const std::vector<GaussianScene> ba = {b, a};
    CHECK(max_abs_diff(render(merge_scenes(ab), cam).rgb, render(merge_scenes(ba), cam).rgb) <= 1e-6);
    const auto merged = merge_scenes(ab);
    REQUIRE(merged.labels());
    CHECK(merged.labels()->front() == "a");
    CHECK(merged.labels()->back() == "b");
    const std::vector<GaussianScene> mixed = {a, random_scene(rng, 3, 2)};
    CHECK_THROWS_AS((void)merge_scenes(mixed), ValidationError);
}

TEST_CASE("merge_scenes: an opaque wall hides objects behind it") {
    Rng rng(16);
    const auto wall = opaque_wall(2.0, 1).with_label("wall");
    const auto object = random_scene(rng, 100, 1, Vec3(-0.5, -0.5, 3.0), Vec3(0.5, 0.5, 4.0)).with_label("object");
    const std::vector<GaussianScene> parts = {object, wall};
    const auto scene = merge_scenes(parts);
    const auto cam = forward_camera(32, 24, 20.0);
    for (int y = 0; y < cam.height; y += 3) {
        for (int x = 0; x < cam.width; x += 3) {
            double hidden = 0.0;
            for (const auto& c : trace_pixel(scene, cam, x, y)) {
                if (scene.labels()->at(c.splat_index) == "object") {
                    hidden += c.weight();
                }
            }
            CHECK(hidden <= 1e-4);
        }
    }
}

TEST_CASE("sample_placement: degenerate regions pin the placement") {
    std::array<RegionSpec, 3> regions = {RegionSpec{{Vec2(1, 1)}, 0.0}, RegionSpec{{Vec2(2, 2)}, 0.3},
                                         RegionSpec{{Vec2(3, 3)}, 0.0}};
    RobotSpawnSpec robot{RegionSpec{{Vec2(-1, 0)}, 0.0}, 0.5, 0.5};
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10; ++i) {
        const auto s = sample_placement(rng, regions, robot);
        CHECK(s.robot_position == Vec3(-1, 0, 0));
        CHECK(s.robot_yaw == 0.5);
        CHECK(s.cones[1].position == Vec3(2, 2, 0.3));
        CHECK(s.cones[1].region == Region::middle);
    }
    regions[0].polygon.clear();
    CHECK_THROWS_AS((void)sample_placement(rng, regions, robot), ValidationError);
}

TEST_CASE("sample_placement: uniform positions and color permutations") {
    const RegionSpec square{{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)}, 0.0};
    const std::array<RegionSpec, 3> regions = {square, square, square};
    const RobotSpawnSpec robot{square, -std::numbers::pi, std::numbers::pi};
    std::mt19937_64 rng(2);
    const int n = 10000;
    Vec2 mean = Vec2::Zero();
    for (int i = 0; i < n; ++i) {
        const auto s = sample_placement(rng, regions, robot);
        mean += s.robot_position.head<2>();
        CHECK((s.robot_position.head<2>().array() >= 0.0).all());
        CHECK((s.robot_position.head<2>().array() <= 1.0).all());
    }
    mean /= n;
    const double sigma = std::sqrt(1.0 / 12.0 / n);
    CHECK(std::abs(mean.x() - 0.5) <= 3 * sigma);
    CHECK(std::abs(mean.y() - 0.5) <= 3 * sigma);

    std::map<std::array<ConeColor, 3>, int> counts;
    const int m = 6000;
    for (int i = 0; i < m; ++i) {
        const auto s = sample_placement(rng, regions, robot);
        counts[{s.cones[0].color, s.cones[1].color, s.cones[2].color}]++;
    }
    CHECK(counts.size() == 6);
    const double p = 1.0 / 6.0;
    const double sd = std::sqrt(m * p * (1 - p));
    for (const auto& [perm, c] : counts) {
        CHECK(std::abs(c - m * p) <= 3 * sd);
    }
}

TEST_CASE("sample_placement is deterministic under a seed") {
    const RegionSpec tri{{Vec2(0, 0), Vec2(2, 0), Vec2(0, 1)}, 0.0};
    const std::array<RegionSpec, 3> regions = {tri, tri, tri};
    const RobotSpawnSpec robot{tri, 0.0, 1.0};
    std::mt19937_64 a(9);
    std::mt19937_64 b(9);
    for (int i = 0; i < 20; ++i) {
        const auto x = sample_placement(a, regions, robot);
        const auto y = sample_placement(b, regions, robot);
        CHECK(x.robot_position == y.robot_position);
        CHECK(x.cones[2].position == y.cones[2].position);
        CHECK(x.cones[0].color == y.cones[0].color);
    }
}

TEST_CASE("instantiate_episode") {
    Rng rng(17);
    const auto env = random_scene(rng, 100, 1, Vec3(-2, -2, 0), Vec3(2, 2, 1));
    std::map<ConeColor, ObjectAsset> objects;
    for (auto c : kConeColors) {
        ObjectAsset a;
        a.scene = random_scene(rng, 40, 1, Vec3(5, 5, 5), Vec3(5.2, 5.2, 5.3));
        a.sim_from_object = random_similarity(rng, 0.5, 1.5);
        // Re-center the object so its centroid lands on the placement point.
        a.bbox = SimilarityTransform::from_translation(-a.scene.centroid());
        a.sim_from_object.translation = Vec3::Zero();
        objects[c] = a;
    }
    PlacementSample placement;
    placement.cones = {ConePlacement{ConeColor::green, Region::left, Vec3(1, 2, 0)},
                       ConePlacement{ConeColor::red, Region::middle, Vec3(0, 3, 0.3)},
                       ConePlacement{ConeColor::blue, Region::right, Vec3(-1, 2, 0)}};

    const auto none = instantiate_episode(env, {}, placement, SimilarityTransform::identity());
    CHECK(scenes_equal(none.scene, env, 0.0));

    const auto ep = instantiate_episode(env, objects, placement, SimilarityTransform::identity());
    CHECK(ep.scene.size() == env.size() + 120);
    std::vector<SplatRecord> red;
    for (std::size_t i = 0; i < ep.scene.size(); ++i) {
        if (ep.scene.labels()->at(i) == "red") {
            red.push_back(ep.scene[i]);
        }
    }
    CHECK((GaussianScene(red, 1).centroid() - Vec3(0, 3, 0.3)).norm() <= 1e-6);

    // Same composition assembled by hand.
    std::vector<GaussianScene> parts = {env};
    for (const auto& cone : placement.cones) {
        const auto& a = objects.at(cone.color);
        const auto t = SimilarityTransform::from_translation(cone.position) * a.sim_from_object * a.bbox;
        parts.push_back(transform_scene(a.scene, t));
    }
    CameraModel cam = forward_camera(64, 48, 40.0);
    cam.look_at(Vec3(0, -3, 2), Vec3(0, 2, 0), Vec3(0, 0, 1));
    CHECK(max_abs_diff(render(ep.scene, cam).rgb, render(merge_scenes(parts), cam).rgb) == 0.0);
    CHECK(ep.object_transforms.size() == 3);

    objects.erase(ConeColor::blue);
    CHECK_THROWS_AS((void)instantiate_episode(env, objects, placement, SimilarityTransform::identity()),
                    ValidationError);
}

TEST_CASE("render is invariant under a joint scene and camera similarity") {
    Rng rng(18);
    const auto scene = random_scene(rng, 200, 3, Vec3(-1, -1, 2), Vec3(1, 1, 4));
    CameraModel cam = forward_camera(48, 32, 30.0);
    const auto base = render(scene, cam);
    for (int trial = 0; trial < 5; ++trial) {
        const auto t = random_similarity(rng);
        const auto out = render(transform_scene(scene, t), transform_camera(cam, t));
        CHECK(max_abs_diff(out.rgb, base.rgb) <= 1e-5);
    }
}
