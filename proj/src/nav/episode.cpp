// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/nav_env.hpp"

#include "gsforge/sh.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace gsforge {

namespace {

SplatRecord disk(const Vec3& mean, const Vec3& scales, double opacity, const Vec3& rgb) {
    SplatRecord s;
    s.mean = mean;
    s.log_scale = scales.array().log();
    s.opacity_logit = logit(opacity);
    s.sh = {rgb_to_sh_dc(rgb)};
    return s;
}

GaussianScene cone_object(ConeColor color) {
    const Vec3 rgb = 0.1 * Vec3::Ones() + 0.8 * color_command(color);
    std::vector<SplatRecord> splats;
    for (int k = 0; k < 6; ++k) {
        const double radius = 0.09 * (1.0 - k / 6.0) + 0.015;
        const Vec3 band = k == 3 ? Vec3(0.95, 0.95, 0.95) : rgb;
        splats.push_back(disk(Vec3(0, 0, 0.03 + 0.05 * k), Vec3(radius, radius, 0.03), 0.97, band));
    }
    return GaussianScene(std::move(splats), 0);
}

RegionSpec rectangle(double x0, double x1, double y0, double y1) {
    return {{Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)}, 0.0};
}

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const char* what) {
    if (!j.is_object()) {
        throw ParseError(std::string(what) + " must be an object");
    }
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw ParseError(std::string(what) + ": unknown key '" + item.key() + "'");
        }
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

}  // namespace

EnvAssets make_flat_arena(double size) {
    if (!(size > 1.0)) {
        throw ValidationError("arena size must exceed 1 m");
    }
    EnvAssets a;
    const double half = 0.5 * size;
    constexpr double kTile = 0.25;
    const int tiles = static_cast<int>(std::ceil(size / kTile));
    std::vector<SplatRecord> ground;
    for (int i = 0; i < tiles; ++i) {
        for (int j = 0; j < tiles; ++j) {
            const double shade = (i + j) % 2 == 0 ? 0.35 : 0.55;
            const Vec3 rgb(shade, shade * 0.95, shade * 0.85);
            ground.push_back(disk(Vec3(-half + (i + 0.5) * kTile, -half + (j + 0.5) * kTile, 0.0),
                                  Vec3(0.6 * kTile, 0.6 * kTile, 0.002), 0.99, rgb));
        }
    }
    a.env_scene = GaussianScene(std::move(ground), 0);
    for (ConeColor c : kConeColors) {
        a.objects[c] = ObjectAsset{cone_object(c), SimilarityTransform::identity(), SimilarityTransform::identity()};
    }
    a.env_from_sim = SimilarityTransform::identity();

    TriangleMesh floor;
    floor.vertices = {Vec3(-half, -half, 0), Vec3(half, -half, 0), Vec3(half, half, 0), Vec3(-half, half, 0)};
    floor.triangles = {{0, 1, 2}, {0, 2, 3}};
    a.terrain = std::make_shared<MeshHeightIndex>(std::move(floor));

    const double s = size;
    a.cone_regions = {rectangle(0.24 * s, 0.4 * s, 0.16 * s, 0.36 * s),     // left (+y)
                      rectangle(0.24 * s, 0.4 * s, -0.1 * s, 0.1 * s),      // middle
                      rectangle(0.24 * s, 0.4 * s, -0.36 * s, -0.16 * s)};  // right
    a.robot = {rectangle(-0.4 * s, -0.3 * s, -0.1 * s, 0.1 * s), -std::numbers::pi, std::numbers::pi};
    return a;
}

EpisodeOutcome run_episode(NavEnv& env, std::uint64_t seed, const Policy& policy, std::ostream* log) {
    Observation obs = env.reset(seed);
    EpisodeOutcome out;
    const double dt = env.config().dt;
    while (true) {
        const Vec3 action = policy(env.state(), obs);
        StepResult r = env.step(action);
        out.total_reward += r.reward.total;
        ++out.steps;
        if (log) {
            *log << step_record(env.state(), action, r, dt).dump() << '\n';
        }
        if (r.terminated || r.truncated) {
            out.success = r.terminated;
            break;
        }
        obs = std::move(r.observation);
    }
    out.time = out.success ? out.steps * dt : env.config().horizon;
    return out;
}

RolloutSummary summarize(std::span<const EpisodeOutcome> outcomes, double horizon) {
    RolloutSummary s;
    s.episodes = static_cast<int>(outcomes.size());
    if (outcomes.empty()) {
        return s;
    }
    double time = 0.0;
    for (const auto& o : outcomes) {
        s.successes += o.success ? 1 : 0;
        time += o.success ? o.time : horizon;
    }
    s.success_rate = static_cast<double>(s.successes) / s.episodes;
    s.average_reach_time = time / s.episodes;
    return s;
}

Json step_record(const EnvState& state, const Vec3& action, const StepResult& result, double dt) {
    const auto& r = result.reward;
    return {{"t", state.step * dt},
            {"step", state.step},
            {"pose", {state.position.x(), state.position.y(), state.position.z(), state.yaw}},
            {"action", to_json(action)},
            {"v_cmd", to_json(result.command)},
            {"reward",
             {{"reach_goal", r.reach_goal},
              {"goal_dis", r.goal_dis},
              {"goal_dis_z", r.goal_dis_z},
              {"goal_heading", r.goal_heading},
              {"stop_at_goal", r.stop_at_goal},
              {"track_lin_vel", r.track_lin_vel},
              {"track_ang_vel", r.track_ang_vel},
              {"action_l2", r.action_l2},
              {"total", r.total}}},
            {"moved", result.moved},
            {"terminated", result.terminated},
            {"truncated", result.truncated}};
}

EnvConfig env_config_from_json(const Json& j) {
    try {
        EnvConfig c;
        reject_unknown(j,
                       {"dt", "horizon", "success_radius", "reach_reward", "v_max", "mount", "step_threshold",
                        "weights", "augmentation", "target_color", "image_width", "image_height", "fov_x", "fov_y",
                        "render_observations"},
                       "env config");
        read(j, "dt", c.dt);
        read(j, "horizon", c.horizon);
        read(j, "success_radius", c.success_radius);
        read(j, "reach_reward", c.reach_reward);
        read(j, "step_threshold", c.step_threshold);
        read(j, "image_width", c.image_width);
        read(j, "image_height", c.image_height);
        read(j, "fov_x", c.fov_x);
        read(j, "fov_y", c.fov_y);
        read(j, "render_observations", c.render_observations);
        if (j.contains("target_color")) {
            c.target_color = parse_cone_color(j.at("target_color").get<std::string>());
        }
        if (j.contains("v_max")) {
            const Json& v = j.at("v_max");
            reject_unknown(v, {"x", "y", "yaw"}, "v_max");
            read(v, "x", c.v_max.x);
            read(v, "y", c.v_max.y);
            read(v, "yaw", c.v_max.yaw);
        }
        if (j.contains("mount")) {
            const Json& m = j.at("mount");
            reject_unknown(m, {"offset", "pitch"}, "mount");
            if (m.contains("offset")) {
                c.mount.offset = vec3_from_json(m.at("offset"));
            }
            read(m, "pitch", c.mount.pitch);
        }
        if (j.contains("weights")) {
            const Json& w = j.at("weights");
            reject_unknown(w,
                           {"reach_goal", "goal_dis", "goal_dis_z", "goal_heading", "stop_at_goal", "track_lin_vel",
                            "track_ang_vel", "action_l2"},
                           "weights");
            read(w, "reach_goal", c.weights.reach_goal);
            read(w, "goal_dis", c.weights.goal_dis);
            read(w, "goal_dis_z", c.weights.goal_dis_z);
            read(w, "goal_heading", c.weights.goal_heading);
            read(w, "stop_at_goal", c.weights.stop_at_goal);
            read(w, "track_lin_vel", c.weights.track_lin_vel);
            read(w, "track_ang_vel", c.weights.track_ang_vel);
            read(w, "action_l2", c.weights.action_l2);
        }
        if (j.contains("augmentation")) {
            const Json& a = j.at("augmentation");
            reject_unknown(a,
                           {"disabled", "brightness", "contrast", "saturation", "hue", "blur_kernel",
                            "blur_sigma_min", "blur_sigma_max", "noise_probability", "noise_sigma",
                            "pose_translation_noise", "pose_rotation_noise", "delay_probability"},
                           "augmentation");
            auto& g = c.augmentation;
            if (a.value("disabled", false)) {
                g = AugmentationConfig::disabled();
            }
            read(a, "brightness", g.brightness);
            read(a, "contrast", g.contrast);
            read(a, "saturation", g.saturation);
            read(a, "hue", g.hue);
            read(a, "blur_kernel", g.blur_kernel);
            read(a, "blur_sigma_min", g.blur_sigma_min);
            read(a, "blur_sigma_max", g.blur_sigma_max);
            read(a, "noise_probability", g.noise_probability);
            read(a, "noise_sigma", g.noise_sigma);
            read(a, "delay_probability", g.delay_probability);
            if (a.contains("pose_translation_noise")) {
                g.pose_translation_noise = vec3_from_json(a.at("pose_translation_noise"));
            }
            if (a.contains("pose_rotation_noise")) {
                g.pose_rotation_noise = vec3_from_json(a.at("pose_rotation_noise"));
            }
        }
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("env config: ") + e.what());
    }
}

}  // namespace gsforge
