// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/nav_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gsforge {

namespace {

// (2u - 1) * bound from one canonical draw, so the rng advances the same way
// whether or not the bound is zero.
double symmetric(std::mt19937_64& rng, double bound) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return (2.0 * u - 1.0) * bound;
}

double unit(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

Mat3 yaw_rotation(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

void EnvConfig::validate() const {
    if (!(dt > 0.0) || !(horizon > 0.0) || !(success_radius > 0.0) || !(reach_reward >= 0.0)) {
        throw ValidationError("env config: dt, horizon and success radius must be positive");
    }
    const double steps = horizon / dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
        throw ValidationError("env config: horizon must be an integral number of control steps");
    }
    if (!(v_max.x > 0.0) || !(v_max.y > 0.0) || !(v_max.yaw > 0.0)) {
        throw ValidationError("env config: velocity limits must be positive");
    }
    if (!(step_threshold > 0.0)) {
        throw ValidationError("env config: traversability threshold must be positive");
    }
    if (image_width <= 0 || image_height <= 0 || !(fov_x > 0.0 && fov_x < std::numbers::pi) ||
        !(fov_y > 0.0 && fov_y < std::numbers::pi)) {
        throw ValidationError("env config: image size and field of view must be positive");
    }
    for (double w : {weights.reach_goal, weights.goal_dis, weights.goal_dis_z, weights.goal_heading,
                     weights.stop_at_goal, weights.track_lin_vel, weights.track_ang_vel, weights.action_l2}) {
        if (!std::isfinite(w)) {
            throw ValidationError("env config: reward weights must be finite");
        }
    }
    if (!mount.offset.allFinite() || !std::isfinite(mount.pitch)) {
        throw ValidationError("env config: camera mount must be finite");
    }
    augmentation.validate();
}

int EnvConfig::horizon_steps() const { return static_cast<int>(std::lround(horizon / dt)); }

double reward_heading(double robot_yaw, double goal_yaw) { return -std::abs(wrap_angle(robot_yaw - goal_yaw)); }

Vec3 command_from_action(const Vec3& raw, const VelocityLimits& limits) {
    return {limits.x * std::tanh(raw.x()), limits.y * std::tanh(raw.y()), limits.yaw * std::tanh(raw.z())};
}

double weighted_total(const RewardBreakdown& r, const RewardWeights& w) {
    return w.reach_goal * r.reach_goal + w.goal_dis * r.goal_dis + w.goal_dis_z * r.goal_dis_z +
           w.goal_heading * r.goal_heading + w.stop_at_goal * r.stop_at_goal + w.track_lin_vel * r.track_lin_vel +
           w.track_ang_vel * r.track_ang_vel + w.action_l2 * r.action_l2;
}

Vec3 scripted_policy(const EnvState& state, const EnvConfig& config) {
    constexpr double kSaturation = 0.99;
    const Vec2 to_goal = (state.goal - state.position).head<2>();
    const double distance = to_goal.norm();
    const double error = distance > 0.0 ? wrap_angle(std::atan2(to_goal.y(), to_goal.x()) - state.yaw) : 0.0;
    // Proportional turn that settles the heading within a few control steps.
    const double yaw_rate =
        std::clamp(error / (2.0 * config.dt), -kSaturation * config.v_max.yaw, kSaturation * config.v_max.yaw);
    // Yaw is applied before translation, so drive along the corrected heading.
    const double remaining = std::abs(wrap_angle(error - yaw_rate * config.dt));
    double forward = 0.0;
    if (remaining < 0.5) {
        forward = std::min(kSaturation * config.v_max.x, distance / config.dt);
    }
    return {std::atanh(forward / config.v_max.x), 0.0, std::atanh(yaw_rate / config.v_max.yaw)};
}

NavEnv::NavEnv(std::shared_ptr<const EnvAssets> assets, EnvConfig config)
    : assets_(std::move(assets)), config_(std::move(config)) {
    if (!assets_ || !assets_->terrain) {
        throw ValidationError("NavEnv needs assets with a terrain index");
    }
    config_.validate();
}

CameraModel NavEnv::ego_camera_sim() const {
    const Mat3 base = yaw_rotation(state_.yaw);
    Mat3 cam_to_base;
    // Camera x right, y down, z forward in a base frame with x forward, z up.
    cam_to_base.col(0) = -Vec3::UnitY();
    cam_to_base.col(1) = -Vec3::UnitZ();
    cam_to_base.col(2) = Vec3::UnitX();
    const Mat3 cam_to_world =
        base * cam_to_base * Eigen::AngleAxisd(-config_.mount.pitch, Vec3::UnitX()).toRotationMatrix();
    CameraModel cam = CameraModel::from_fov(config_.image_width, config_.image_height, config_.fov_x, config_.fov_y);
    cam.set_pose(state_.position + base * config_.mount.offset, Quat(cam_to_world));
    return cam;
}

CameraModel NavEnv::ego_camera() const { return transform_camera(ego_camera_sim(), assets_->env_from_sim); }

Observation NavEnv::observe() {
    const auto& aug = config_.augmentation;
    // All draws happen in a fixed order whatever the configuration, so
    // switching one randomization off leaves the others' streams intact.
    Vec3 dt;
    Vec3 dr;
    for (int i = 0; i < 3; ++i) {
        dt[i] = symmetric(rng_, aug.pose_translation_noise[i]);
    }
    for (int i = 0; i < 3; ++i) {
        dr[i] = symmetric(rng_, aug.pose_rotation_noise[i]);
    }
    ColorJitter jitter;
    jitter.brightness = 1.0 + symmetric(rng_, aug.brightness);
    jitter.contrast = 1.0 + symmetric(rng_, aug.contrast);
    jitter.saturation = 1.0 + symmetric(rng_, aug.saturation);
    jitter.hue = symmetric(rng_, aug.hue);
    const double blur_sigma = aug.blur_sigma_min + (aug.blur_sigma_max - aug.blur_sigma_min) * unit(rng_);
    const bool add_noise = unit(rng_) < aug.noise_probability;
    const bool delayed = unit(rng_) < aug.delay_probability;

    Observation obs;
    obs.command = color_command(state_.goal_color);
    obs.last_action = state_.last_action;
    obs.proprio.assign(30, 0.0);
    obs.proprio[2] = command_from_action(state_.last_action, config_.v_max).z();
    obs.proprio[5] = -1.0;

    if (config_.render_observations) {
        CameraModel cam = ego_camera_sim();
        if (!dt.isZero(0.0) || !dr.isZero(0.0)) {
            const Mat3 cam_to_world = cam.rotation.transpose();
            const Mat3 jitter_rot = (Eigen::AngleAxisd(dr.x(), Vec3::UnitX()) *
                                     Eigen::AngleAxisd(dr.y(), Vec3::UnitY()) *
                                     Eigen::AngleAxisd(dr.z(), Vec3::UnitZ()))
                                        .toRotationMatrix();
            cam.set_pose(cam.center() + cam_to_world * dt, Quat(cam_to_world * jitter_rot));
        }
        Image frame = render(episode_.scene, transform_camera(cam, assets_->env_from_sim)).rgb;
        frame = apply_color_jitter(frame, jitter);
        frame = gaussian_blur(frame, aug.blur_kernel, blur_sigma);
        if (add_noise && aug.noise_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, aug.noise_sigma);
            for (auto& v : frame.data) {
                v = std::clamp(v + noise(rng_), 0.0, 1.0);
            }
        }
        obs.rgb = delayed && previous_frame_ ? *previous_frame_ : frame;
        previous_frame_ = std::move(frame);
    }
    return obs;
}

Observation NavEnv::reset(std::uint64_t seed) {
    rng_.seed(seed);
    state_ = EnvState{};
    state_.goal_color = config_.target_color
                            ? *config_.target_color
                            : kConeColors[std::uniform_int_distribution<std::size_t>(0, kConeColors.size() - 1)(rng_)];
    placement_ = sample_placement(rng_, assets_->cone_regions, assets_->robot);
    episode_ = instantiate_episode(assets_->env_scene, assets_->objects, placement_, assets_->env_from_sim);
    state_.position = placement_.robot_position;
    if (const auto z = assets_->terrain->height(state_.position.x(), state_.position.y())) {
        state_.position.z() = *z;
    }
    state_.yaw = placement_.robot_yaw;
    state_.goal = placement_.cone(state_.goal_color).position;
    state_.goal_distance = (state_.position - state_.goal).norm();
    state_.goal_dz = std::abs(state_.position.z() - state_.goal.z());
    previous_frame_.reset();
    started_ = true;
    return observe();
}

StepResult NavEnv::step(const Vec3& raw_action) {
    if (!started_) {
        throw ValidationError("NavEnv::step called before reset");
    }
    if (state_.terminated || state_.truncated) {
        throw ValidationError("NavEnv::step called after the episode ended");
    }
    if (!finite(raw_action)) {
        throw ValidationError("NavEnv::step: action must be finite");
    }
    StepResult out;
    out.command = command_from_action(raw_action, config_.v_max);
    const double dt = config_.dt;

    state_.yaw = wrap_angle(state_.yaw + out.command.z() * dt);
    const Mat3 heading = yaw_rotation(state_.yaw);
    const Vec3 planar_move = heading * Vec3(out.command.x() * dt, out.command.y() * dt, 0.0);
    const Vec3 before = state_.position;
    const Vec3 candidate = before + planar_move;
    const auto z = assets_->terrain->height(candidate.x(), candidate.y());
    if (z && std::abs(*z - before.z()) <= config_.step_threshold) {
        state_.position = Vec3(candidate.x(), candidate.y(), *z);
        out.moved = true;
    }
    const Vec3 achieved = heading.transpose() * (state_.position - before) / dt;

    const double d = (state_.position - state_.goal).norm();
    const double dz = std::abs(state_.position.z() - state_.goal.z());
    const Vec2 to_goal = (state_.goal - state_.position).head<2>();
    const double goal_yaw = std::atan2(to_goal.y(), to_goal.x());

    RewardBreakdown& r = out.reward;
    r.goal_dis = state_.goal_distance - d;
    r.goal_dis_z = state_.goal_dz - dz;
    r.goal_heading = reward_heading(state_.yaw, goal_yaw);
    const bool reached = d <= config_.success_radius;
    r.reach_goal = reached ? config_.reach_reward : 0.0;
    r.stop_at_goal = d <= 2.0 * config_.success_radius ? -out.command.norm() : 0.0;
    r.track_lin_vel = -(achieved.head<2>() - out.command.head<2>()).norm();
    r.track_ang_vel = 0.0;  // yaw is applied exactly by the kinematic agent
    r.action_l2 = -raw_action.squaredNorm();
    r.total = weighted_total(r, config_.weights);

    state_.goal_distance = d;
    state_.goal_dz = dz;
    state_.last_action = raw_action;
    ++state_.step;
    state_.terminated = reached;
    state_.truncated = !reached && state_.step >= config_.horizon_steps();
    out.terminated = state_.terminated;
    out.truncated = state_.truncated;
    out.observation = observe();
    return out;
}

}  // namespace gsforge
