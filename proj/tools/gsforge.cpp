// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

// Command-line driver for the real-to-sim workflow.
//
// Exit status: 0 on success, 2 for usage errors (unknown flags, missing
// files, bad option values), 1 when an operation fails.

#include "gsforge/compose.hpp"
#include "gsforge/image_io.hpp"
#include "gsforge/json_io.hpp"
#include "gsforge/mesh.hpp"
#include "gsforge/nav_env.hpp"
#include "gsforge/ply.hpp"
#include "gsforge/rasterizer.hpp"
#include "gsforge/recon.hpp"
#include "gsforge/render_service.hpp"
#include "gsforge/similarity.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gsforge;

namespace {

void print_similarity(const SimilarityTransform& t) {
    std::cout << std::setprecision(12);
    std::cout << "scale " << t.scale << '\n';
    std::cout << "rotation";
    for (int r = 0; r < 3; ++r) {
        std::cout << (r ? " ; " : " ") << t.rotation(r, 0) << ' ' << t.rotation(r, 1) << ' ' << t.rotation(r, 2);
    }
    std::cout << '\n';
    std::cout << "translation " << t.translation.x() << ' ' << t.translation.y() << ' ' << t.translation.z() << '\n';
}

std::vector<CameraModel> cameras_from_file(const fs::path& path) {
    const Json j = read_json_file(path);
    const Json& list = j.is_object() && j.contains("cameras") ? j.at("cameras") : j;
    if (!list.is_array()) {
        throw ParseError(path.string() + ": expected an array of cameras");
    }
    std::vector<CameraModel> cams;
    for (const Json& c : list) {
        cams.push_back(camera_from_json(c));
    }
    return cams;
}

void write_mesh(const TriangleMesh& mesh, const fs::path& out) {
    const std::string ext = out.extension().string();
    if (ext == ".stl") {
        write_stl(mesh, out);
    } else if (ext == ".obj") {
        write_obj(mesh, out);
    } else {
        throw ValidationError("mesh output must end in .obj or .stl");
    }
}

/// {"objects": {"<id>": {"scene": "file.ply", "pose": <similarity>}}}; paths
/// are relative to the file's directory.
std::map<std::string, ServiceObject> objects_from_file(const fs::path& path) {
    const Json j = read_json_file(path);
    std::map<std::string, ServiceObject> out;
    if (!j.is_object() || !j.contains("objects") || !j.at("objects").is_object()) {
        throw ParseError(path.string() + ": expected {\"objects\": {...}}");
    }
    for (const auto& item : j.at("objects").items()) {
        const Json& o = item.value();
        fs::path scene = o.at("scene").get<std::string>();
        if (scene.is_relative()) {
            scene = path.parent_path() / scene;
        }
        SimilarityTransform pose = o.contains("pose") ? similarity_from_json(o.at("pose")) : SimilarityTransform{};
        pose.validate();
        out[item.key()] = ServiceObject{read_ply_file(scene), pose};
    }
    return out;
}

struct Options {
    std::uint64_t seed = 0;

    std::string src, dst, out, scene, transform, box, outside, camera, depth_out, cameras, tsdf, image, reference,
        views, trace, config, policy = "scripted", log, objects, bind = "127.0.0.1";
    std::vector<std::string> scenes;
    std::vector<double> origin, dims_in;
    double voxel = 0.01;
    double truncation = 0.0;
    int iterations = 300;
    int episodes = 100;
    double arena_size = 5.0;
    bool no_render = false;
    int port = 0;
};

int run_align(const Options& o) {
    const auto src = points_from_json(read_json_file(o.src));
    const auto dst = points_from_json(read_json_file(o.dst));
    if (src.size() != dst.size()) {
        throw ValidationError("source and destination point counts differ");
    }
    const SimilarityFit fit = fit_similarity(src, dst);
    print_similarity(fit.transform);
    std::cout << "residual " << fit.rms_residual << '\n';
    if (!o.out.empty()) {
        write_json_file(to_json(fit.transform), o.out);
    }
    return 0;
}

int run_transform(const Options& o) {
    SimilarityTransform t = similarity_from_json(read_json_file(o.transform));
    t.validate();
    write_ply_file(o.out, transform_scene(read_ply_file(o.scene), t));
    return 0;
}

int run_crop(const Options& o) {
    const OrientedBoundingBox box = obb_from_json(read_json_file(o.box));
    auto [inside, rest] = crop_by_obb(read_ply_file(o.scene), box);
    write_ply_file(o.out, inside);
    if (!o.outside.empty()) {
        write_ply_file(o.outside, rest);
    }
    std::cout << "inside " << inside.size() << " outside " << rest.size() << '\n';
    return 0;
}

int run_compose(const Options& o) {
    std::vector<GaussianScene> parts;
    for (const auto& s : o.scenes) {
        parts.push_back(read_ply_file(s));
    }
    const GaussianScene merged = merge_scenes(parts);
    write_ply_file(o.out, merged);
    std::cout << "splats " << merged.size() << '\n';
    return 0;
}

int run_render(const Options& o) {
    const RenderOutput r = render(read_ply_file(o.scene), camera_from_json(read_json_file(o.camera)));
    write_png(o.out, r.rgb);
    if (!o.depth_out.empty()) {
        write_float_raster(o.depth_out, r.depth);
    }
    return 0;
}

int run_tsdf_fuse(const Options& o) {
    if (o.origin.size() != 3 || o.dims_in.size() != 3) {
        throw ValidationError("--origin and --dims take three values");
    }
    const Vec3i dims(static_cast<int>(o.dims_in[0]), static_cast<int>(o.dims_in[1]), static_cast<int>(o.dims_in[2]));
    TsdfVolume volume(Vec3(o.origin[0], o.origin[1], o.origin[2]), o.voxel, dims, o.truncation);
    const auto cams = cameras_from_file(o.cameras);
    fuse_scene_views(volume, read_ply_file(o.scene), cams);
    write_tsdf_checkpoint(volume, o.out);
    if (volume.warning_count() > 0) {
        std::cerr << "warning: " << volume.warning_count() << " views saw none of the volume\n";
    }
    return 0;
}

int run_mesh_extract(const Options& o) {
    TriangleMesh mesh = extract_mesh(read_tsdf_checkpoint(o.tsdf));
    compute_vertex_normals(mesh);
    write_mesh(mesh, o.out);
    std::cout << "vertices " << mesh.vertices.size() << " triangles " << mesh.triangles.size() << " watertight "
              << (is_watertight(mesh) ? "yes" : "no") << '\n';
    return 0;
}

int run_metrics(const Options& o) {
    const Image a = read_png(o.image);
    const Image b = read_png(o.reference);
    std::cout << std::setprecision(10) << "l1 " << photometric_l1(a, b) << '\n' << "psnr " << psnr(a, b) << '\n';
    if (!o.scene.empty()) {
        std::cout << "scale_loss " << scale_loss(read_ply_file(o.scene)) << '\n';
    }
    return 0;
}

int run_fit(const Options& o) {
    const auto views = load_target_views(o.views);
    FitOptions options;
    options.iterations = o.iterations;
    const FitResult r = fit_scene(read_ply_file(o.scene), views, options);
    write_ply_file(o.out, r.scene);
    if (!o.trace.empty()) {
        write_trace_csv(r.trace, o.trace);
    }
    std::cout << std::setprecision(10) << "initial " << r.trace.front().loss.total << " final "
              << r.trace.back().loss.total << " accepted " << r.accepted_steps << '\n';
    return 0;
}

int run_rollout(const Options& o) {
    EnvConfig config = o.config.empty() ? EnvConfig{} : env_config_from_json(read_json_file(o.config));
    if (o.no_render) {
        config.render_observations = false;
    }
    Policy policy;
    if (o.policy == "scripted") {
        policy = [&config](const EnvState& s, const Observation&) { return scripted_policy(s, config); };
    } else if (o.policy == "zero") {
        policy = [](const EnvState&, const Observation&) { return Vec3(Vec3::Zero()); };
    } else {
        throw ValidationError("unknown policy '" + o.policy + "'");
    }
    const auto assets = std::make_shared<const EnvAssets>(make_flat_arena(o.arena_size));
    const auto n = static_cast<std::size_t>(o.episodes);
    std::vector<EpisodeOutcome> outcomes(n);
    std::vector<std::string> logs(n);
    // Episode i is seeded with seed + i, so results do not depend on the
    // worker count or scheduling.
    parallel_for(n, [&](std::size_t i) {
        NavEnv env(assets, config);
        std::ostringstream log;
        outcomes[i] = run_episode(env, o.seed + i, policy, o.log.empty() ? nullptr : &log);
        logs[i] = log.str();
    });
    if (!o.log.empty()) {
        std::ofstream out(o.log);
        for (std::size_t i = 0; i < n; ++i) {
            std::istringstream lines(logs[i]);
            for (std::string line; std::getline(lines, line);) {
                Json record = Json::parse(line);
                record["episode"] = i;
                record["seed"] = o.seed + i;
                out << record.dump() << '\n';
            }
        }
        if (!out) {
            throw Error("failed writing " + o.log);
        }
    }
    const RolloutSummary s = summarize(outcomes, config.horizon);
    std::cout << std::fixed << std::setprecision(4) << "episodes " << s.episodes << " successes " << s.successes
              << " SR " << s.success_rate << " ART " << s.average_reach_time << '\n';
    return 0;
}

int run_serve(const Options& o) {
    auto assets = std::make_shared<ServiceAssets>();
    assets->environment = read_ply_file(o.scene);
    if (!o.objects.empty()) {
        assets->objects = objects_from_file(o.objects);
    }
    const CameraModel cam = camera_from_json(read_json_file(o.camera));
    assets->default_intrinsics = {cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy};

    // Block the stop signals before any thread starts so only sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    RenderServer server(assets, ServerOptions{o.bind, static_cast<std::uint16_t>(o.port)});
    server.start();
    std::cout << "listening on " << o.bind << ':' << server.port() << std::endl;
    int signal = 0;
    sigwait(&stop_signals, &signal);
    server.stop();
    std::cout << "stopped after " << server.connections_served() << " connections\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gsforge: Gaussian splat real-to-sim toolkit"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--seed", o.seed, "Seed for every random draw")->capture_default_str();

    auto* align = app.add_subcommand("align", "Fit a similarity between corresponding point sets");
    align->add_option("--src", o.src, "Source points JSON")->required()->check(CLI::ExistingFile);
    align->add_option("--dst", o.dst, "Destination points JSON")->required()->check(CLI::ExistingFile);
    align->add_option("--out", o.out, "Write the transform as JSON");

    auto* transform = app.add_subcommand("transform", "Apply a similarity to a splat scene");
    transform->add_option("--scene", o.scene)->required()->check(CLI::ExistingFile);
    transform->add_option("--transform", o.transform, "Similarity JSON")->required()->check(CLI::ExistingFile);
    transform->add_option("--out", o.out)->required();

    auto* crop = app.add_subcommand("crop", "Keep the splats inside an oriented box");
    crop->add_option("--scene", o.scene)->required()->check(CLI::ExistingFile);
    crop->add_option("--box", o.box, "Box JSON")->required()->check(CLI::ExistingFile);
    crop->add_option("--out", o.out, "Splats inside the box")->required();
    crop->add_option("--outside", o.outside, "Splats outside the box");

    auto* compose = app.add_subcommand("compose", "Merge splat scenes in order");
    compose->add_option("--scene", o.scenes)->required()->check(CLI::ExistingFile);
    compose->add_option("--out", o.out)->required();

    auto* render_cmd = app.add_subcommand("render", "Render a scene to PNG");
    render_cmd->add_option("--scene", o.scene)->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--camera", o.camera, "Camera JSON")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--out", o.out, "PNG path")->required();
    render_cmd->add_option("--depth", o.depth_out, "Float raster of unbiased depth");

    auto* fuse = app.add_subcommand("tsdf-fuse", "Fuse rendered depth into a TSDF volume");
    fuse->add_option("--scene", o.scene)->required()->check(CLI::ExistingFile);
    fuse->add_option("--cameras", o.cameras, "JSON array of cameras")->required()->check(CLI::ExistingFile);
    fuse->add_option("--origin", o.origin, "Center of voxel (0,0,0)")->required()->expected(3);
    fuse->add_option("--dims", o.dims_in, "Voxel counts")->required()->expected(3);
    fuse->add_option("--voxel", o.voxel, "Voxel size")->capture_default_str()->check(CLI::PositiveNumber);
    fuse->add_option("--truncation", o.truncation, "Truncation distance, 0 for four voxels");
    fuse->add_option("--out", o.out, "Checkpoint path")->required();

    auto* extract = app.add_subcommand("mesh-extract", "Marching cubes on a TSDF checkpoint");
    extract->add_option("--tsdf", o.tsdf)->required()->check(CLI::ExistingFile);
    extract->add_option("--out", o.out, ".obj or .stl")->required();

    auto* metrics = app.add_subcommand("metrics", "Photometric metrics between two PNGs");
    metrics->add_option("--image", o.image)->required()->check(CLI::ExistingFile);
    metrics->add_option("--reference", o.reference)->required()->check(CLI::ExistingFile);
    metrics->add_option("--scene", o.scene, "Also report the scale loss of a scene")->check(CLI::ExistingFile);

    auto* fit = app.add_subcommand("fit", "Fit a scene to target views");
    fit->add_option("--scene", o.scene, "Initial scene")->required()->check(CLI::ExistingFile);
    fit->add_option("--views", o.views, "Target view manifest")->required()->check(CLI::ExistingFile);
    fit->add_option("--iterations", o.iterations)->capture_default_str()->check(CLI::NonNegativeNumber);
    fit->add_option("--out", o.out)->required();
    fit->add_option("--trace", o.trace, "Loss trace CSV");

    auto* rollout = app.add_subcommand("rollout", "Run policy episodes in the built-in arena");
    rollout->add_option("--config", o.config, "Environment config JSON")->check(CLI::ExistingFile);
    rollout->add_option("--policy", o.policy)->capture_default_str()->check(CLI::IsMember({"scripted", "zero"}));
    rollout->add_option("--seed", o.seed, "First episode seed")->capture_default_str();
    rollout->add_option("--episodes", o.episodes)->capture_default_str()->check(CLI::PositiveNumber);
    rollout->add_option("--arena-size", o.arena_size)->capture_default_str();
    rollout->add_option("--log", o.log, "JSON-lines step log");
    rollout->add_flag("--no-render", o.no_render, "Skip observation rendering");

    auto* serve = app.add_subcommand("serve", "Serve renders over TCP until SIGINT or SIGTERM");
    serve->add_option("--scene", o.scene, "Environment scene")->required()->check(CLI::ExistingFile);
    serve->add_option("--objects", o.objects, "Object list JSON")->check(CLI::ExistingFile);
    serve->add_option("--camera", o.camera, "Camera JSON giving default intrinsics")
        ->required()
        ->check(CLI::ExistingFile);
    serve->add_option("--port", o.port, "0 picks a free port")->capture_default_str()->check(CLI::Range(0, 65535));
    serve->add_option("--bind", o.bind)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::vector<std::pair<CLI::App*, int (*)(const Options&)>> commands = {
        {align, run_align},     {transform, run_transform}, {crop, run_crop},       {compose, run_compose},
        {render_cmd, run_render}, {fuse, run_tsdf_fuse},    {extract, run_mesh_extract}, {metrics, run_metrics},
        {fit, run_fit},         {rollout, run_rollout},     {serve, run_serve}};
    try {
        for (const auto& [cmd, run] : commands) {
            if (cmd->parsed()) {
                return run(o);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "gsforge " << app.get_subcommands().front()->get_name() << ": error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
