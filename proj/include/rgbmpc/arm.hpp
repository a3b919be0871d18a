#pragma once

// Serial-chain arm with modified DH kinematics and a sphere decomposition for collision checks.

#include "rgbmpc/common.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace rgbmpc {

using VecXd = Eigen::VectorXd;

/// One revolute joint: T_i = RotX(alpha) TransX(a) RotZ(q_i + theta_offset) TransZ(d), where a and
/// alpha describe the preceding link (Craig's modified convention).
struct ArmJoint {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
  double lower = -M_PI;
  double upper = M_PI;
  double max_velocity = 2.0;
  double max_acceleration = 10.0;
};

struct CollisionSphere {
  int link = 0;  // 0 is the base frame, i the frame after joint i
  Vec3 center = Vec3::Zero();
  double radius = 0.05;
};

struct ArmReference {
  VecXd q;
  std::vector<Vec3> link_origins;
  Vec3 ee_position = Vec3::Zero();
  Eigen::Quaterniond ee_orientation = Eigen::Quaterniond::Identity();
  std::vector<Vec3> sphere_centers;
};

struct ArmModel {
  std::string name;
  Eigen::Isometry3d base = Eigen::Isometry3d::Identity();
  std::vector<ArmJoint> joints;
  int ee_link = 0;
  Eigen::Isometry3d ee_offset = Eigen::Isometry3d::Identity();
  std::vector<CollisionSphere> spheres;
  std::optional<ArmReference> reference;

  int dof() const { return static_cast<int>(joints.size()); }
  VecXd lower() const;
  VecXd upper() const;
  VecXd max_velocity() const;
  VecXd max_acceleration() const;
  /// Throws InputError on inconsistent limits, radii or link indices.
  void validate() const;
};

ArmModel arm_from_json(const nlohmann::json& j);
nlohmann::json arm_to_json(const ArmModel& m);
ArmModel load_arm_model(const std::filesystem::path& path);
/// Bundled models by name ("arm7", "planar3").
ArmModel builtin_arm(const std::string& name);

struct FkResult {
  std::vector<Eigen::Isometry3d> links;  // dof + 1 frames, links[0] = base
  std::vector<Vec3> sphere_centers;
  Eigen::Isometry3d ee = Eigen::Isometry3d::Identity();
};

FkResult forward_kinematics(const ArmModel& model, const VecXd& q);

/// Hot-path FK: sphere centers and the end-effector pose only, into preallocated storage.
void sphere_centers(const ArmModel& model, const double* q, Vec3* centers, Eigen::Isometry3d* ee);

struct IkOptions {
  double orientation_weight = 0.3;  // meters per radian
  int iterations = 200;
  double damping = 1e-2;
  double tolerance = 1e-5;
};

/// Damped least squares on end-effector position and orientation, joints kept inside limits.
/// Returns nullopt when the residual stays above 1 mm / 0.01 rad.
std::optional<VecXd> inverse_kinematics(const ArmModel& model, const Eigen::Isometry3d& target, const VecXd& seed,
                                        const IkOptions& opt = {});

}  // namespace rgbmpc
