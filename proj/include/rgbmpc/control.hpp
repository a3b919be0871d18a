#pragma once

// Sampling-based MPC (MPPI) for a joint-space double integrator whose collision cost reads a
// signed distance field.

#include "rgbmpc/arm.hpp"

#include <functional>
#include <vector>

namespace rgbmpc {

/// Any signed distance lookup (baked grid, analytic scene, ...), meters.
using DistanceQuery = std::function<double(const Vec3&)>;

struct ArmState {
  VecXd q;
  VecXd qd;
  double time = 0.0;
};

struct GoalPose {
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

struct CostWeights {
  double goal_position = 20.0;     // per meter of end-effector error, every step
  double goal_orientation = 1.0;   // per radian, every step
  double terminal = 10.0;          // extra multiplier on the goal terms of the last step
  double terminal_velocity = 0.5;  // per rad/s of joint speed at the last step
  double collision_hinge = 2000.0; // per meter of margin violated inside the buffer
  double collision_penalty = 1e4;  // per sphere and step in true contact
  double joint_limit = 1000.0;     // quadratic barrier inside limit_margin
  double smoothness = 1e-3;        // per (rad/s^2)^2 of control change
};

struct MpcConfig {
  int horizon = 32;
  int rollouts = 256;
  double dt = 0.02;
  double lambda = 0.5;
  /// Per-joint standard deviation of the sampled accelerations (rad/s^2); empty means noise_scale for all.
  VecXd noise_sigma;
  double noise_scale = 0.5;
  CostWeights weights;
  double buffer = 0.01;
  double limit_margin = 0.05;
  /// Joint speed cap used by the controller, as a fraction of the model's velocity limits.
  double velocity_scale = 0.5;
  int max_steps = 500;
  double goal_tolerance = 0.01;
  /// Keep the lowest-cost sample instead of the weighted mean whenever the mean collides within the horizon.
  bool collision_fallback = true;
  std::uint64_t seed = 0;

  void validate() const;
  VecXd sigma(int dof) const;
};

/// Per-sphere hinge inside the buffer plus a penalty when the center is within one radius.
double collision_cost(const DistanceQuery& sdf, const Vec3* centers, const std::vector<CollisionSphere>& spheres,
                      double buffer, double w_hinge, double w_penalty);

/// Semi-implicit Euler step of the clamped double integrator; u are joint accelerations.
ArmState integrate(const ArmModel& model, const ArmState& s, const VecXd& u, double dt, double velocity_scale = 1.0);

struct CostBreakdown {
  double goal = 0.0;
  double orientation = 0.0;
  double collision = 0.0;
  double limits = 0.0;
  double smoothness = 0.0;
  double velocity = 0.0;
  double total() const { return goal + orientation + collision + limits + smoothness + velocity; }
};

/// Cost of applying the H x dof control sequence from state. prev_u is the control applied last.
CostBreakdown rollout_cost(const ArmModel& model, const ArmState& state, const Eigen::MatrixXd& controls,
                           const VecXd& prev_u, const DistanceQuery& sdf, const GoalPose& goal, const MpcConfig& config);

/// End-effector position and orientation error of a joint configuration.
std::pair<double, double> goal_error(const ArmModel& model, const VecXd& q, const GoalPose& goal);

/// Softmin of the rollout costs at temperature lambda, normalized to sum to 1.
VecXd mppi_weights(const VecXd& costs, double lambda);

class MppiController {
 public:
  MppiController(const ArmModel& model, const MpcConfig& config);

  struct StepInfo {
    VecXd control;
    VecXd weights;  // per rollout, sums to 1
    double min_cost = 0.0;
    bool fallback = false;
  };

  /// One MPPI update around the warm-started nominal sequence; returns the control to apply and
  /// shifts the nominal sequence. step_index keys the noise stream.
  StepInfo step(const ArmState& state, const GoalPose& goal, const DistanceQuery& sdf, std::uint64_t step_index);

  const Eigen::MatrixXd& nominal() const { return nominal_; }
  void reset();

 private:
  const ArmModel& model_;
  MpcConfig config_;
  Eigen::MatrixXd nominal_;  // H x dof
  VecXd prev_u_;
};

struct EpisodeResult {
  std::vector<ArmState> trajectory;
  std::vector<Eigen::Isometry3d> ee;
  std::vector<double> clearance;  // oracle clearance per state (min over spheres of sdf - radius)
  bool reached = false;
  double final_error = 0.0;
  double min_clearance = 0.0;
  double max_penetration = 0.0;
  int steps = 0;
  double wall_ms = 0.0;
};

/// Closed loop from start until the goal tolerance is met or max_steps pass. The controller sees
/// sdf; clearance and penetration are measured against oracle.
EpisodeResult run_episode(const ArmModel& model, const VecXd& start, const GoalPose& goal, const DistanceQuery& sdf,
                          const DistanceQuery& oracle, const MpcConfig& config);

struct Episode {
  VecXd start;
  GoalPose goal;
};

struct SuiteOptions {
  int count = 20;
  double height = 0.15;
  /// Start and goal configurations need at least this oracle clearance for every sphere.
  double clearance = 0.015;
  double min_separation = 0.2;
  /// Footprint of sampled end-effector positions (world xy).
  Aabb region{Vec3(-0.3, -0.22, 0.0), Vec3(0.3, 0.22, 0.0)};
};

/// Random start/goal pairs at a fixed end-effector height, both collision-free under oracle.
std::vector<Episode> generate_episode_suite(const ArmModel& model, const DistanceQuery& oracle, std::uint64_t seed,
                                            const SuiteOptions& opt = {});

nlohmann::json episodes_to_json(const std::vector<Episode>& episodes);
std::vector<Episode> episodes_from_json(const nlohmann::json& j, int dof);
void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> load_episodes(const std::filesystem::path& path, int dof);

/// t, q..., ee xyz, ee quat wxyz, oracle clearance.
void write_trajectory_csv(const std::filesystem::path& path, const EpisodeResult& result);

}  // namespace rgbmpc
