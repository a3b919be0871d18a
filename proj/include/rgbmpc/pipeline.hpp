#pragma once

// Stage wiring: scene -> dataset -> field -> density grid/mesh -> ESDF -> episodes -> metrics.
// Each stage is a plain function; run_pipeline chains them with artifact caching.

#include "rgbmpc/eval.hpp"
#include "rgbmpc/mesh.hpp"
#include "rgbmpc/render.hpp"
#include "rgbmpc/scene.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rgbmpc {

struct DatasetConfig {
  int views_per_ring = 20;
  std::vector<double> heights{0.12, 0.30, 0.50};
  double radius = 0.55;
  Vec3 lookat = Vec3(0.0, 0.0, 0.04);
  int held_out_views = 6;
  double held_out_radius = 0.50;
  double held_out_height = 0.40;
  int width = 160;
  int height = 120;
  double fov_deg = 60.0;
  double noise_sigma = 0.0;

  void validate() const;
};

/// Training rings plus a separate held-out ring (offset in azimuth).
Dataset render_dataset(const Scene& scene, const DatasetConfig& cfg, std::uint64_t seed);

struct MeshConfig {
  Dims3 dims{301, 241, 91};
  double isovalue = 2.5;
  bool fill_voids = true;
  float fill_value = 50.0f;
  /// Channels up to 2 * void_seal nodes wide do not connect a pocket to the outside.
  int void_seal = 2;
  bool cap_boundary = true;
  int min_component_triangles = 20;

  void validate() const;
};

struct MeshStage {
  TriangleMesh mesh;
  std::size_t filled_nodes = 0;
  CleanupReport cleanup;
  WatertightReport watertight;
};

/// Void filling, marching cubes and cleanup on a sampled density grid (the grid is modified).
MeshStage extract_mesh(DensityGrid& grid, const MeshConfig& cfg);

/// Mesh SDF unioned with the scene's support half-spaces. An empty mesh leaves only the support.
SdfGrid bake_esdf(const TriangleMesh& mesh, const std::vector<Primitive>& support, const Aabb& bounds,
                  const Dims3& dims);

/// Analytic signed distance baked on a grid: the ground-truth ESDF the controller sees.
SdfGrid bake_ground_truth(const Scene& scene, const Aabb& bounds, const Dims3& dims);

/// Grid lookup combined with the exact support half-spaces (which extend past the grid bounds).
DistanceQuery controller_query(const SdfGrid& grid, const std::vector<Primitive>& support);

struct PipelineConfig {
  /// Scene file; empty selects standard_scene(standard_scene).
  std::string scene_path;
  int standard_scene = 0;
  DatasetConfig dataset;
  TrainConfig train;
  MeshConfig mesh;
  Dims3 esdf_dims{301, 241, 91};
  Dims3 eval_dims{300, 250, 90};
  std::string arm = "arm7";
  MpcConfig mpc;
  /// Episode suite file; empty generates one from the seed.
  std::string episodes_path;
  SuiteOptions suite;
  /// Also run the suite on the ground-truth ESDF for reference.
  bool ground_truth_control = true;
  std::filesystem::path out = "rgbmpc_out";
  std::uint64_t seed = 0;

  void validate() const;
  /// Desk-scale dims and a shorter training run.
  void apply_fast();
};

PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json train_config_to_json(const TrainConfig& c);
void train_config_from_json(const nlohmann::json& j, TrainConfig& c);
nlohmann::json mpc_config_to_json(const MpcConfig& c);
void mpc_config_from_json(const nlohmann::json& j, MpcConfig& c);

Scene load_pipeline_scene(const PipelineConfig& cfg);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
  bool cached = false;
};

struct MetricsReport {
  std::string scene;
  double holdout_psnr = 0.0;
  VolumetricReport volumetric;
  AccuracyCurve accuracy;
  BandL1Curve band_l1;
  std::optional<ControlReport> control_ground_truth;
  std::optional<ControlReport> control;
  std::vector<StageTiming> timings;

  nlohmann::json to_json() const;
};

/// Suite episodes on one ESDF, trajectories written as <prefix>NN.csv under dir.
std::vector<EpisodeResult> run_suite(const ArmModel& arm, const std::vector<Episode>& episodes, const DistanceQuery& sdf,
                                     const DistanceQuery& oracle, const MpcConfig& mpc,
                                     const std::filesystem::path& dir = {}, const std::string& prefix = "traj_");

/// Volumetric metrics, accuracy curve and band L1 of pred against the scene oracle, with CSV/SVG
/// outputs when out_dir is set.
MetricsReport evaluate_esdf(const SdfGrid& pred, const Scene& scene, const Dims3& eval_dims,
                            const std::filesystem::path& out_dir = {});

using LogFn = std::function<void(const std::string&)>;

/// Runs every stage, reusing artifacts in cfg.out whose recorded input key matches (unless force).
MetricsReport run_pipeline(const PipelineConfig& cfg, bool force = false, const LogFn& log = {});

}  // namespace rgbmpc
