// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

// Goal-reaching environment over a composed splat scene and a terrain mesh.
//
// The agent lives in the simulator frame (x forward, y left, z up). Its ego
// camera is carried into the environment scene frame through env_from_sim
// before rendering. Actions are raw 3-vectors (forward, lateral, yaw) squashed
// by tanh and scaled by the velocity limits.

#pragma once

#include "gsforge/camera.hpp"
#include "gsforge/compose.hpp"
#include "gsforge/json_io.hpp"
#include "gsforge/mesh.hpp"
#include "gsforge/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

namespace gsforge {

struct VelocityLimits {
    double x = 1.0;    // m/s
    double y = 0.5;    // m/s
    double yaw = 1.0;  // rad/s
};

struct CameraMount {
    Vec3 offset = Vec3(0.0, 0.0, 0.3);  // base frame
    double pitch = 0.0;                 // radians, positive tilts down
};

struct RewardWeights {
    double reach_goal = 1.0;
    double goal_dis = 1.0;
    double goal_dis_z = 1.0;
    double goal_heading = 1.0;
    double stop_at_goal = 0.01;
    double track_lin_vel = 0.01;
    double track_ang_vel = 0.01;
    double action_l2 = 0.01;
};

/// Ranges are symmetric around the identity: brightness 0.2 draws a factor
/// in [0.8, 1.2]; hue 0.05 shifts by up to 5% of the hue circle.
struct AugmentationConfig {
    double brightness = 0.2;
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.05;
    int blur_kernel = 5;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 1.0;  // 0 disables blur
    double noise_probability = 0.05;
    double noise_sigma = 0.03;
    Vec3 pose_translation_noise = Vec3::Constant(0.02);  // meters, per camera axis
    Vec3 pose_rotation_noise = Vec3::Constant(0.02);     // radians, per camera axis
    double delay_probability = 0.5;

    /// Every randomization switched off.
    [[nodiscard]] static AugmentationConfig disabled();
    void validate() const;
};

struct EnvConfig {
    double dt = 0.2;
    double horizon = 15.0;
    double success_radius = 0.25;
    double reach_reward = 10.0;
    VelocityLimits v_max;
    CameraMount mount;
    double step_threshold = 0.15;
    RewardWeights weights;
    AugmentationConfig augmentation;
    /// Goal color. When unset each reset draws one uniformly.
    std::optional<ConeColor> target_color;
    int image_width = 320;
    int image_height = 180;
    double fov_x = 1.5701;
    double fov_y = 1.0260;
    /// Rollouts that only need rewards can skip rendering.
    bool render_observations = true;

    void validate() const;
    [[nodiscard]] int horizon_steps() const;
};

/// Everything an episode is built from. Immutable and shareable between
/// environment instances.
struct EnvAssets {
    GaussianScene env_scene;                   // environment frame
    std::map<ConeColor, ObjectAsset> objects;  // empty means no cone splats are drawn
    SimilarityTransform env_from_sim;
    std::shared_ptr<const MeshHeightIndex> terrain;  // simulator frame
    std::array<RegionSpec, 3> cone_regions;          // left, middle, right
    RobotSpawnSpec robot;
};

/// Square flat arena of the given side length centered on the origin: a
/// checkered ground of flat splats, small colored cone objects, a two
/// triangle terrain, the robot spawning near x = -size/2 and cones near x = +size/2.
[[nodiscard]] EnvAssets make_flat_arena(double size = 5.0);

struct EnvState {
    Vec3 position = Vec3::Zero();  // base, simulator frame
    double yaw = 0.0;
    Vec3 goal = Vec3::Zero();
    ConeColor goal_color = ConeColor::red;
    double goal_distance = 0.0;  // ||p_robot - p_goal|| after the last update
    double goal_dz = 0.0;        // |z_robot - z_goal|
    int step = 0;
    Vec3 last_action = Vec3::Zero();
    bool terminated = false;
    bool truncated = false;
};

struct Observation {
    Image rgb;               // empty when rendering is disabled
    Vec3 command = Vec3::Zero();
    Vec3 last_action = Vec3::Zero();
    /// Base angular velocity (3), projected gravity (3), then 12 joint
    /// positions and 12 joint velocities, which the kinematic agent zero-fills.
    std::vector<double> proprio;
};

struct RewardBreakdown {
    double reach_goal = 0.0;
    double goal_dis = 0.0;
    double goal_dis_z = 0.0;
    double goal_heading = 0.0;
    double stop_at_goal = 0.0;
    double track_lin_vel = 0.0;
    double track_ang_vel = 0.0;
    double action_l2 = 0.0;
    double total = 0.0;
};

struct StepResult {
    Observation observation;
    RewardBreakdown reward;
    Vec3 command = Vec3::Zero();  // executed velocity command
    bool moved = false;           // false when the translation was rejected
    bool terminated = false;
    bool truncated = false;
};

/// -|wrap(robot_yaw - goal_yaw)| with the difference wrapped to (-pi, pi].
[[nodiscard]] double reward_heading(double robot_yaw, double goal_yaw);

/// v_max * tanh(raw), componentwise.
[[nodiscard]] Vec3 command_from_action(const Vec3& raw, const VelocityLimits& limits);

/// Weighted sum of the terms.
[[nodiscard]] double weighted_total(const RewardBreakdown& r, const RewardWeights& w);

/// Turn toward the goal bearing and drive forward once the heading error
/// is below 0.5 rad. Returns pre-tanh values.
[[nodiscard]] Vec3 scripted_policy(const EnvState& state, const EnvConfig& config);

/// Per-image color jitter parameters (identity: 1, 1, 1, 0).
struct ColorJitter {
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;  // fraction of the hue circle
};

/// Brightness, contrast, saturation then hue, clamping to [0, 1] after each.
[[nodiscard]] Image apply_color_jitter(const Image& rgb, const ColorJitter& jitter);
/// Separable Gaussian blur with edge clamping. sigma <= 0 returns the input.
[[nodiscard]] Image gaussian_blur(const Image& img, int kernel, double sigma);

/// One environment instance: single-threaded, owns its rng and state.
class NavEnv {
  public:
    NavEnv(std::shared_ptr<const EnvAssets> assets, EnvConfig config);

    Observation reset(std::uint64_t seed);
    /// Throws ValidationError after the episode ended or for non-finite actions.
    StepResult step(const Vec3& raw_action);

    [[nodiscard]] const EnvState& state() const { return state_; }
    [[nodiscard]] const EnvConfig& config() const { return config_; }
    [[nodiscard]] const PlacementSample& placement() const { return placement_; }
    [[nodiscard]] const GaussianScene& episode_scene() const { return episode_.scene; }
    /// Ego camera in the environment scene frame, without pose noise.
    [[nodiscard]] CameraModel ego_camera() const;
    /// Ego camera in the simulator frame, without pose noise.
    [[nodiscard]] CameraModel ego_camera_sim() const;

  private:
    Observation observe();

    std::shared_ptr<const EnvAssets> assets_;
    EnvConfig config_;
    std::mt19937_64 rng_;
    EnvState state_;
    PlacementSample placement_;
    EpisodeScene episode_;
    std::optional<Image> previous_frame_;
    bool started_ = false;
};

struct EpisodeOutcome {
    bool success = false;
    int steps = 0;
    double time = 0.0;  // seconds until success, or the horizon on failure
    double total_reward = 0.0;
};

using Policy = std::function<Vec3(const EnvState&, const Observation&)>;

/// Runs one episode. When `log` is given, one JSON line per step is written.
EpisodeOutcome run_episode(NavEnv& env, std::uint64_t seed, const Policy& policy, std::ostream* log = nullptr);

struct RolloutSummary {
    int episodes = 0;
    int successes = 0;
    double success_rate = 0.0;
    /// Mean time to reach; failed episodes count as the full horizon.
    double average_reach_time = 0.0;
};

[[nodiscard]] RolloutSummary summarize(std::span<const EpisodeOutcome> outcomes, double horizon);

/// Episode log record: {t, pose, action, v_cmd, reward, terminated, truncated, moved}.
[[nodiscard]] Json step_record(const EnvState& state, const Vec3& action, const StepResult& result, double dt);

/// Reads the EnvConfig fields present in `j`; absent fields keep defaults.
[[nodiscard]] EnvConfig env_config_from_json(const Json& j);

}  // namespace gsforge
