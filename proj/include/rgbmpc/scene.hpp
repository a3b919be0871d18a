#pragma once

#include "rgbmpc/common.hpp"
#include "rgbmpc/image.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace rgbmpc {

enum class PrimitiveKind { Sphere, Box, Cylinder, HalfSpace };

const char* to_string(PrimitiveKind k);
PrimitiveKind primitive_kind_from_string(const std::string& s);

/// Analytic solid placed by a rigid transform (world_from_local).
///
/// Size parameters by kind:
///   sphere     size.x() = radius
///   box        size = half extents
///   cylinder   size.x() = radius, size.y() = full height (axis = local z, centered)
///   half-space unused; the solid is local z <= 0
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  Vec3 size = Vec3::Constant(0.05);
  Vec3 albedo = Vec3::Constant(0.8);

  /// Exact signed distance to this primitive alone.
  double sdf(const Vec3& p) const;
  /// World bounding box; half-spaces return std::nullopt (unbounded).
  std::optional<Aabb> bounding_box() const;

  static Primitive sphere(const Vec3& center, double radius, const Vec3& albedo);
  static Primitive box(const Eigen::Isometry3d& pose, const Vec3& half_extents, const Vec3& albedo);
  static Primitive cylinder(const Eigen::Isometry3d& pose, double radius, double height, const Vec3& albedo);
  static Primitive half_space(const Eigen::Isometry3d& pose, const Vec3& albedo);
};

struct Scene {
  std::vector<Primitive> primitives;
  Aabb bounds;
  Vec3 background = Vec3(0.9, 0.93, 1.0);

  /// Throws InputError when an invariant is violated.
  void validate() const;
};

struct Intrinsics {
  double fx = 100, fy = 100, cx = 50, cy = 50;
  int width = 100, height = 100;

  /// Pinhole intrinsics from a horizontal field of view, principal point at the image center.
  static Intrinsics from_fov(int width, int height, double horizontal_fov_rad);
};

/// Pinhole camera; camera frame is x right, y down, z forward.
struct CameraPose {
  Intrinsics intrinsics;
  Eigen::Isometry3d world_from_camera = Eigen::Isometry3d::Identity();

  void validate() const;
  /// World-space unit ray direction through the center of pixel (px, py).
  Vec3 pixel_direction(int px, int py) const;
  Vec3 origin() const { return world_from_camera.translation(); }
};

/// Union (min) of the primitives' exact signed distances.
double analytic_sdf(const Scene& scene, const Vec3& p);

struct DensityOptions {
  double sigma_inside = 50.0;
  /// Half-width of a linear ramp around the surface in meters; 0 is a hard step.
  double smoothing_band = 0.0;
};

/// Synthetic density: sigma_inside where analytic_sdf <= 0 (the surface counts as inside), else 0.
double analytic_density(const Scene& scene, const Vec3& p, const DensityOptions& opt = {});

struct Hit {
  double t = 0.0;
  Vec3 normal = Vec3::UnitZ();
  int primitive = -1;
};

/// Closest forward intersection of the ray (t > tmin) with any primitive.
std::optional<Hit> intersect(const Scene& scene, const Vec3& origin, const Vec3& dir, double tmin = 1e-9,
                             bool half_spaces_only = false);

/// Lambertian shading under the fixed rig: ambient plus two directional lights, total weight 1.
Vec3 shade(const Vec3& albedo, const Vec3& normal);

/// Radiance seen along a ray when only the half-space primitives (the table) and the
/// background are present. Used as the known backdrop when compositing the radiance field.
Vec3 backdrop_radiance(const Scene& scene, const Vec3& origin, const Vec3& dir);

struct RenderOptions {
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

Image render_image(const Scene& scene, const CameraPose& camera, const RenderOptions& opt = {});
/// First-hit distance along each pixel ray, +inf on a miss.
std::vector<double> render_depth(const Scene& scene, const CameraPose& camera);

/// n poses per height, evenly spaced in azimuth (starting at phase) on a circle of the given
/// radius around lookat; each looks at lookat with world up +z. Heights are world z.
std::vector<CameraPose> camera_ring(int n, double radius, const std::vector<double>& heights, const Vec3& lookat,
                                    const Intrinsics& intrinsics = {}, double phase = 0.0);

/// Camera-to-world looking from eye toward target with world up +z.
Eigen::Isometry3d look_at(const Vec3& eye, const Vec3& target);

// ---------------------------------------------------------------------------
// generators

struct SceneGenOptions {
  int min_primitives = 8;
  int max_primitives = 12;
  /// Object centers are drawn from this footprint (meters), centered on the origin.
  double region_x = 0.75;
  double region_y = 0.60;
  double min_size = 0.03;
  double max_size = 0.12;
  /// Minimum horizontal gap between object footprints.
  double min_gap = 0.02;
};

/// Table workspace bounds: 75 x 60 x 22.5 cm above the table plane z = 0.
Aabb default_workspace();

/// Table half-space at z = 0 plus non-overlapping primitives resting on it.
Scene generate_scene(std::uint64_t seed, const SceneGenOptions& opt = {});

/// Scene used for the standard evaluation suite (index 0, 1, 2).
Scene standard_scene(int index);

/// Small three-object scene used for the training convergence check.
Scene three_object_scene();

// ---------------------------------------------------------------------------
// serialization

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

nlohmann::json camera_to_json(const CameraPose& cam);
CameraPose camera_from_json(const nlohmann::json& j);

/// Half-space primitives, background color and workspace bounds of a scene: everything a
/// radiance field composites onto but does not have to reconstruct.
Scene backdrop_of(const Scene& scene);

struct Dataset {
  std::vector<CameraPose> cameras;
  std::vector<Image> images;
  /// true for views reserved for evaluation ("split": "test" in poses.json).
  std::vector<bool> held_out;
  Scene backdrop;
};

/// Writes NNNN.png images, poses.json (a list of frames with row-major 4x4 camera_to_world and
/// intrinsics) and backdrop.json (scene file format).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace rgbmpc
