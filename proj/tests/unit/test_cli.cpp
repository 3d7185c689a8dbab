// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

// Drives the gsforge binary end to end through temporary files.

#include "fixtures.hpp"
#include "service_fixtures.hpp"

#include "gsforge/image_io.hpp"
#include "gsforge/json_io.hpp"
#include "gsforge/mesh.hpp"
#include "gsforge/nav_env.hpp"
#include "gsforge/ply.hpp"
#include "gsforge/render_service.hpp"

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace gsforge;
using namespace gsforge::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(GSFORGE_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) {
        r.out.append(buf, n);
    }
    const int raw = ::pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

/// Value following `key` in whitespace-separated output.
double field(const std::string& out, const std::string& key) {
    std::istringstream in(out);
    for (std::string tok; in >> tok;) {
        if (tok == key) {
            std::string value;
            in >> value;
            return std::stod(value);
        }
    }
    FAIL("no field " << key << " in: " << out);
    return 0.0;
}

struct TempDir {
    fs::path path;
    TempDir() {
        std::string pattern = (fs::temp_directory_path() / "gsforge-cli-XXXXXX").string();
        REQUIRE(::mkdtemp(pattern.data()) != nullptr);
        path = pattern;
    }
    ~TempDir() { fs::remove_all(path); }
    [[nodiscard]] std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::vector<std::uint8_t> file_bytes(const std::string& path) { return read_binary_file(path); }

}  // namespace

TEST_CASE("usage errors exit 2 and operation failures exit 1") {
    TempDir dir;
    CHECK(run("").status == 2);
    CHECK(run("render --bogus-flag").status == 2);
    CHECK(run("render --scene " + dir / "missing.ply" + " --camera x --out y.png").status == 2);
    CHECK(run("rollout --episodes 0").status == 2);
    CHECK(run("--help").status == 0);

    // Four coplanar points are a degenerate registration.
    Json coplanar = Json::array({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
    write_json_file(coplanar, dir / "a.json");
    const Run r = run("align --src " + dir / "a.json" + " --dst " + dir / "a.json");
    CHECK(r.status == 1);
    CHECK(r.out.find("error") != std::string::npos);

    std::ofstream(dir / "bad.ply") << "not a ply file";
    write_json_file(Json{{"scale", 1.0}, {"rotation", {1, 0, 0, 0}}, {"translation", {0, 0, 0}}}, dir / "t.json");
    CHECK(run("transform --scene " + dir / "bad.ply" + " --transform " + dir / "t.json" + " --out " + dir / "o.ply")
              .status == 1);
}

TEST_CASE("align recovers a similarity from consistent point files") {
    TempDir dir;
    Rng rng(21);
    SimilarityTransform t;
    t.rotation = random_rotation(rng);
    t.translation = random_vec(rng, -2, 2);
    t.scale = 1.7;
    Json src = Json::array();
    Json dst = Json::array();
    for (int i = 0; i < 6; ++i) {
        const Vec3 p = random_vec(rng, -1, 1);
        src.push_back(to_json(p));
        dst.push_back(to_json(t.apply(p)));
    }
    write_json_file(src, dir / "src.json");
    write_json_file(Json{{"points", dst}}, dir / "dst.json");
    const Run r = run("align --src " + dir / "src.json" + " --dst " + dir / "dst.json" + " --out " + dir / "t.json");
    REQUIRE(r.status == 0);
    CHECK(field(r.out, "scale") == doctest::Approx(1.7).epsilon(1e-9));
    CHECK(field(r.out, "residual") < 1e-9);
    const SimilarityTransform back = similarity_from_json(read_json_file(dir / "t.json"));
    CHECK((back.matrix() - t.matrix()).norm() < 1e-9);
}

TEST_CASE("render writes the library render byte for byte") {
    TempDir dir;
    Rng rng(22);
    const GaussianScene scene = random_scene(rng, 200, 2, Vec3(-1, -1, 2), Vec3(1, 1, 4));
    write_ply_file(dir / "s.ply", scene);
    CameraModel cam = forward_camera(64, 48, 60);
    cam.look_at(Vec3(0.2, -0.1, 0), Vec3(0, 0, 3), Vec3(0, -1, 0));
    write_json_file(to_json(cam), dir / "cam.json");
    const Run r = run("render --scene " + dir / "s.ply" + " --camera " + dir / "cam.json" + " --out " + dir / "img.png" +
                      " --depth " + dir / "d.raw");
    REQUIRE(r.status == 0);
    // The PLY and camera JSON round trips are exact, so the bytes must match.
    const GaussianScene loaded = read_ply_file(dir / "s.ply");
    const CameraModel cam_back = camera_from_json(read_json_file(dir / "cam.json"));
    const RenderOutput expected = render(loaded, cam_back);
    CHECK(file_bytes(dir / "img.png") == encode_png(expected.rgb));
    const Image depth = read_float_raster(dir / "d.raw");
    REQUIRE(depth.same_shape(expected.depth));
    // float32 storage: allow one rounding step relative to the value.
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        CHECK(std::abs(depth.data[i] - expected.depth.data[i]) <= 1e-6 * std::max(1.0, expected.depth.data[i]));
    }

    const Run m = run("metrics --image " + dir / "img.png" + " --reference " + dir / "img.png");
    REQUIRE(m.status == 0);
    CHECK(field(m.out, "l1") == 0.0);
}

TEST_CASE("transform, crop and compose chain through files") {
    TempDir dir;
    Rng rng(23);
    const GaussianScene scene = random_scene(rng, 100, 1);
    write_ply_file(dir / "s.ply", scene);
    write_json_file(Json{{"scale", 2.0}, {"rotation", {1, 0, 0, 0}}, {"translation", {10, 0, 0}}}, dir / "t.json");
    REQUIRE(run("transform --scene " + dir / "s.ply" + " --transform " + dir / "t.json" + " --out " + dir / "moved.ply")
                .status == 0);
    const GaussianScene moved = read_ply_file(dir / "moved.ply");
    REQUIRE(moved.size() == scene.size());
    CHECK((moved[0].mean - (2.0 * scene[0].mean + Vec3(10, 0, 0))).norm() < 1e-5);

    write_json_file(Json{{"center", {0, 0, 0}}, {"rotation", {1, 0, 0, 0}}, {"half_extents", {0.5, 2, 2}}},
                    dir / "box.json");
    const Run c = run("crop --scene " + dir / "s.ply" + " --box " + dir / "box.json" + " --out " + dir / "in.ply" +
                      " --outside " + dir / "out.ply");
    REQUIRE(c.status == 0);
    const auto in = read_ply_file(dir / "in.ply");
    const auto out = read_ply_file(dir / "out.ply");
    CHECK(in.size() + out.size() == scene.size());
    for (const auto& s : in.splats()) {
        CHECK(std::abs(s.mean.x()) <= 0.5);
    }

    const Run m = run("compose --scene " + dir / "in.ply" + " --scene " + dir / "out.ply" + " --out " + dir / "m.ply");
    REQUIRE(m.status == 0);
    CHECK(read_ply_file(dir / "m.ply").size() == scene.size());
}

TEST_CASE("tsdf-fuse and mesh-extract reconstruct a sphere") {
    TempDir dir;
    const GaussianScene sphere = sphere_surface_scene(0.5, 3000, 0.03);
    write_ply_file(dir / "sphere.ply", sphere);
    Json cams = Json::array();
    for (const auto& c : orbit_cameras(12, 2.0, 64, 64, 80)) {
        cams.push_back(to_json(c));
    }
    write_json_file(cams, dir / "cams.json");
    const Run f = run("tsdf-fuse --scene " + dir / "sphere.ply" + " --cameras " + dir / "cams.json" +
                      " --origin -0.7 -0.7 -0.7 --dims 71 71 71 --voxel 0.02 --out " + dir / "v.raw");
    REQUIRE(f.status == 0);
    const Run m = run("mesh-extract --tsdf " + dir / "v.raw" + " --out " + dir / "mesh.obj");
    REQUIRE(m.status == 0);
    CHECK(m.out.find("watertight yes") != std::string::npos);
    const TriangleMesh mesh = read_obj(dir / "mesh.obj");
    REQUIRE(!mesh.vertices.empty());
    double err = 0.0;
    for (const auto& v : mesh.vertices) {
        err += std::abs(v.norm() - 0.5);
    }
    CHECK(err / static_cast<double>(mesh.vertices.size()) < 0.02);
}

TEST_CASE("rollout prints SR and ART matching the library and logs every step") {
    TempDir dir;
    write_json_file(Json{{"render_observations", false}}, dir / "env.json");
    const Run r = run("rollout --config " + dir / "env.json" + " --policy scripted --seed 7 --episodes 12 --log " +
                      dir / "log.jsonl");
    REQUIRE(r.status == 0);

    EnvConfig config;
    config.render_observations = false;
    const auto assets = std::make_shared<const EnvAssets>(make_flat_arena(5.0));
    std::vector<EpisodeOutcome> outcomes;
    int steps = 0;
    for (std::uint64_t seed = 7; seed < 19; ++seed) {
        NavEnv env(assets, config);
        outcomes.push_back(
            run_episode(env, seed, [&](const EnvState& s, const Observation&) { return scripted_policy(s, config); }));
        steps += outcomes.back().steps;
    }
    const RolloutSummary s = summarize(outcomes, config.horizon);
    CHECK(field(r.out, "SR") == doctest::Approx(s.success_rate).epsilon(1e-4));
    CHECK(field(r.out, "ART") == doctest::Approx(s.average_reach_time).epsilon(1e-4));

    std::ifstream log(dir / "log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line); ++lines) {
        const Json j = Json::parse(line);
        CHECK(j.contains("reward"));
        CHECK(j.contains("pose"));
    }
    CHECK(lines == steps);

    // Failures are charged the full horizon.
    const Run zero = run("rollout --config " + dir / "env.json" + " --policy zero --seed 1 --episodes 3");
    REQUIRE(zero.status == 0);
    CHECK(field(zero.out, "SR") == 0.0);
    CHECK(field(zero.out, "ART") == doctest::Approx(15.0));
}

TEST_CASE("serve answers requests and stops on SIGTERM") {
    TempDir dir;
    Rng rng(24);
    const auto assets = make_service_assets(rng, 32, 24);
    write_ply_file(dir / "env.ply", assets->environment);
    write_ply_file(dir / "red.ply", assets->objects.at("red").scene);
    write_json_file(Json{{"objects",
                          {{"red", {{"scene", "red.ply"}, {"pose", to_json(assets->objects.at("red").default_pose)}}}}}},
                    dir / "objects.json");
    CameraModel cam = forward_camera(32, 24, 0.9 * 32);
    write_json_file(to_json(cam), dir / "cam.json");

    int pipe_fds[2];
    REQUIRE(::pipe(pipe_fds) == 0);
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        ::dup2(pipe_fds[1], STDOUT_FILENO);
        ::close(pipe_fds[0]);
        const std::string scene = dir / "env.ply";
        const std::string objects = dir / "objects.json";
        const std::string camera = dir / "cam.json";
        ::execl(GSFORGE_CLI, GSFORGE_CLI, "serve", "--scene", scene.c_str(), "--objects", objects.c_str(), "--camera",
                camera.c_str(), "--port", "0", static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(pipe_fds[1]);
    FILE* out = ::fdopen(pipe_fds[0], "r");
    char line[256] = {0};
    REQUIRE(std::fgets(line, sizeof line, out) != nullptr);
    const std::string text(line);
    const auto colon = text.rfind(':');
    REQUIRE(colon != std::string::npos);
    const auto port = static_cast<std::uint16_t>(std::stoi(text.substr(colon + 1)));

    ServiceAssets local;
    local.environment = read_ply_file(dir / "env.ply");
    local.objects["red"] = {read_ply_file(dir / "red.ply"), assets->objects.at("red").default_pose};
    local.default_intrinsics = {cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy};
    {
        RenderClient client("127.0.0.1", port);
        for (int i = 0; i < 5; ++i) {
            RenderRequest req = random_request(rng, static_cast<std::uint64_t>(i));
            std::erase_if(req.objects, [](const ObjectPoseUpdate& u) { return u.object_id != "red"; });
            const RenderResponse resp = client.request(req);
            CHECK(resp.ok);
            CHECK(resp.payload == render_request(local, req).payload);
        }
    }
    ::kill(pid, SIGTERM);
    int status = 0;
    ::waitpid(pid, &status, 0);
    std::fclose(out);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
}
