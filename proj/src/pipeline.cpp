#include "rgbmpc/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rgbmpc {

using json = nlohmann::json;

void DatasetConfig::validate() const {
  if (views_per_ring < 1 || heights.empty()) throw InputError("dataset needs at least one ring with one view");
  if (!(radius > 0 && held_out_radius > 0)) throw InputError("dataset camera radius must be > 0");
  if (held_out_views < 0) throw InputError("held-out view count must be >= 0");
  if (width < 2 || height < 2) throw InputError("dataset images must be at least 2x2");
  if (!(fov_deg > 0 && fov_deg < 180)) throw InputError("dataset field of view must be in (0, 180) degrees");
  if (!(noise_sigma >= 0)) throw InputError("dataset noise must be >= 0");
  if (static_cast<std::size_t>(views_per_ring) * heights.size() < 2) throw InputError("dataset needs >= 2 training views");
}

Dataset render_dataset(const Scene& scene, const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  scene.validate();
  const Intrinsics K = Intrinsics::from_fov(cfg.width, cfg.height, cfg.fov_deg * M_PI / 180.0);
  auto cams = camera_ring(cfg.views_per_ring, cfg.radius, cfg.heights, cfg.lookat, K, 0.0);
  const std::size_t n_train = cams.size();
  if (cfg.held_out_views > 0) {
    auto test = camera_ring(cfg.held_out_views, cfg.held_out_radius, {cfg.held_out_height}, cfg.lookat, K, 0.3);
    cams.insert(cams.end(), test.begin(), test.end());
  }
  Dataset d;
  d.backdrop = backdrop_of(scene);
  d.cameras = cams;
  d.images.resize(cams.size());
  d.held_out.resize(cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    RenderOptions ro;
    ro.noise_sigma = cfg.noise_sigma;
    ro.noise_seed = derive_seed(seed, "render", i);
    d.images[i] = render_image(scene, cams[i], ro);
    d.held_out[i] = i >= n_train;
  }
  return d;
}

void MeshConfig::validate() const {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) throw InputError("mesh grid needs at least 2 nodes per axis");
  if (!(isovalue > 0)) throw InputError("isovalue must be > 0");
  if (!(fill_value > isovalue)) throw InputError("void fill value must exceed the isovalue");
  if (void_seal < 0) throw InputError("void_seal must be >= 0");
  if (min_component_triangles < 0) throw InputError("min component size must be >= 0");
}

MeshStage extract_mesh(DensityGrid& grid, const MeshConfig& cfg) {
  cfg.validate();
  grid.validate();
  MeshStage r;
  if (cfg.fill_voids) r.filled_nodes = fill_enclosed_voids(grid, cfg.isovalue, cfg.fill_value, cfg.void_seal);
  MarchingCubesOptions mo;
  mo.isovalue = cfg.isovalue;
  mo.cap_boundary = cfg.cap_boundary;
  r.mesh = mesh_cleanup(marching_cubes(grid, mo), static_cast<std::size_t>(cfg.min_component_triangles), &r.cleanup);
  compute_vertex_normals(r.mesh);
  r.watertight = watertight_report(r.mesh);
  return r;
}

SdfGrid bake_esdf(const TriangleMesh& mesh, const std::vector<Primitive>& support, const Aabb& bounds,
                  const Dims3& dims) {
  if (mesh.empty()) {
    SdfGrid g = bake_function(
        [&](const Vec3& p) {
          double d = std::numeric_limits<double>::infinity();
          for (const auto& s : support) d = std::min(d, s.sdf(p));
          // nothing at all: report the distance to the far corner so values stay finite
          return std::isfinite(d) ? d : bounds.extent().norm();
        },
        bounds, dims);
    g.provenance = "support only (empty mesh)";
    return g;
  }
  BakeOptions bo;
  bo.support = support;
  SdfGrid g = bake_grid(build_index(mesh), bounds, dims, bo);
  g.provenance = "mesh " + hex64(mesh_hash(mesh));
  return g;
}

SdfGrid bake_ground_truth(const Scene& scene, const Aabb& bounds, const Dims3& dims) {
  SdfGrid g = bake_function([&](const Vec3& p) { return analytic_sdf(scene, p); }, bounds, dims);
  g.provenance = "analytic";
  return g;
}

DistanceQuery controller_query(const SdfGrid& grid, const std::vector<Primitive>& support) {
  return [&grid, support](const Vec3& p) {
    double d = query(grid, p);
    for (const auto& s : support) d = std::min(d, s.sdf(p));
    return d;
  };
}

// ---------------------------------------------------------------------------
// config

void PipelineConfig::validate() const {
  dataset.validate();
  train.validate();
  mesh.validate();
  mpc.validate();
  for (const auto* d : {&esdf_dims, &eval_dims})
    if ((*d)[0] < 2 || (*d)[1] < 2 || (*d)[2] < 2) throw InputError("grid dims need at least 2 nodes per axis");
  if (scene_path.empty() && (standard_scene < 0 || standard_scene > 2)) throw InputError("standard scene index must be 0, 1 or 2");
  if (!scene_path.empty() && !std::filesystem::exists(scene_path)) throw InputError("scene file not found: " + scene_path);
  if (!episodes_path.empty() && !std::filesystem::exists(episodes_path)) {
    throw InputError("episode suite not found: " + episodes_path);
  }
  if (suite.count < 1) throw InputError("episode count must be >= 1");
}

void PipelineConfig::apply_fast() {
  mesh.dims = {151, 121, 46};
  esdf_dims = {151, 121, 46};
  eval_dims = {150, 125, 45};
  mesh.void_seal = std::min(mesh.void_seal, 1);  // same physical width at twice the spacing
  train.steps = std::min(train.steps, 500);
}

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_of(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json dims_json(const Dims3& d) { return json::array({d[0], d[1], d[2]}); }
Dims3 dims_of(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("grid dims must be a 3-element array");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

template <typename T>
void maybe(const json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return {{"rays_per_batch", c.rays_per_batch}, {"steps", c.steps}, {"samples_per_ray", c.samples_per_ray},
          {"lr_hash", c.lr_hash}, {"lr_network", c.lr_network}, {"final_lr_ratio", c.final_lr_ratio},
          {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon},
          {"loss", c.loss == LossKind::Norm ? "norm" : "squared"},
          {"termination", c.composite.termination}, {"min_alpha", c.composite.min_alpha},
          {"log_interval", c.log_interval}, {"eval_samples", c.eval_samples},
          {"levels", c.field.grid.levels}, {"base_resolution", c.field.grid.base_resolution},
          {"growth", c.field.grid.growth}, {"features", c.field.grid.features},
          {"table_size", c.field.grid.table_size}};
}

void train_config_from_json(const json& j, TrainConfig& c) {
  maybe(j, "rays_per_batch", c.rays_per_batch);
  maybe(j, "steps", c.steps);
  maybe(j, "samples_per_ray", c.samples_per_ray);
  maybe(j, "lr_hash", c.lr_hash);
  maybe(j, "lr_network", c.lr_network);
  maybe(j, "final_lr_ratio", c.final_lr_ratio);
  maybe(j, "beta1", c.beta1);
  maybe(j, "beta2", c.beta2);
  maybe(j, "epsilon", c.epsilon);
  if (j.contains("loss")) {
    const auto s = j.at("loss").get<std::string>();
    if (s == "norm") c.loss = LossKind::Norm;
    else if (s == "squared") c.loss = LossKind::SquaredNorm;
    else throw InputError("train.loss must be 'norm' or 'squared'");
  }
  maybe(j, "termination", c.composite.termination);
  maybe(j, "min_alpha", c.composite.min_alpha);
  maybe(j, "log_interval", c.log_interval);
  maybe(j, "eval_samples", c.eval_samples);
  maybe(j, "levels", c.field.grid.levels);
  maybe(j, "base_resolution", c.field.grid.base_resolution);
  maybe(j, "growth", c.field.grid.growth);
  maybe(j, "features", c.field.grid.features);
  maybe(j, "table_size", c.field.grid.table_size);
}

json mpc_config_to_json(const MpcConfig& c) {
  const auto& w = c.weights;
  json j = {{"horizon", c.horizon}, {"rollouts", c.rollouts}, {"dt", c.dt}, {"lambda", c.lambda},
            {"noise_scale", c.noise_scale}, {"buffer", c.buffer}, {"limit_margin", c.limit_margin},
            {"velocity_scale", c.velocity_scale}, {"max_steps", c.max_steps}, {"goal_tolerance", c.goal_tolerance},
            {"collision_fallback", c.collision_fallback},
            {"weights", {{"goal_position", w.goal_position}, {"goal_orientation", w.goal_orientation},
                         {"terminal", w.terminal}, {"terminal_velocity", w.terminal_velocity},
                         {"collision_hinge", w.collision_hinge}, {"collision_penalty", w.collision_penalty},
                         {"joint_limit", w.joint_limit}, {"smoothness", w.smoothness}}}};
  if (c.noise_sigma.size()) j["noise_sigma"] = std::vector<double>(c.noise_sigma.data(), c.noise_sigma.data() + c.noise_sigma.size());
  return j;
}

void mpc_config_from_json(const json& j, MpcConfig& c) {
  maybe(j, "horizon", c.horizon);
  maybe(j, "rollouts", c.rollouts);
  maybe(j, "dt", c.dt);
  maybe(j, "lambda", c.lambda);
  maybe(j, "noise_scale", c.noise_scale);
  maybe(j, "buffer", c.buffer);
  maybe(j, "limit_margin", c.limit_margin);
  maybe(j, "velocity_scale", c.velocity_scale);
  maybe(j, "max_steps", c.max_steps);
  maybe(j, "goal_tolerance", c.goal_tolerance);
  maybe(j, "collision_fallback", c.collision_fallback);
  if (j.contains("noise_sigma")) {
    const auto v = j.at("noise_sigma").get<std::vector<double>>();
    c.noise_sigma = Eigen::Map<const VecXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    maybe(w, "goal_position", c.weights.goal_position);
    maybe(w, "goal_orientation", c.weights.goal_orientation);
    maybe(w, "terminal", c.weights.terminal);
    maybe(w, "terminal_velocity", c.weights.terminal_velocity);
    maybe(w, "collision_hinge", c.weights.collision_hinge);
    maybe(w, "collision_penalty", c.weights.collision_penalty);
    maybe(w, "joint_limit", c.weights.joint_limit);
    maybe(w, "smoothness", c.weights.smoothness);
  }
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  try {
    maybe(j, "scene", c.scene_path);
    maybe(j, "standard_scene", c.standard_scene);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      maybe(d, "views_per_ring", c.dataset.views_per_ring);
      maybe(d, "heights", c.dataset.heights);
      maybe(d, "radius", c.dataset.radius);
      if (d.contains("lookat")) c.dataset.lookat = vec3_of(d.at("lookat"));
      maybe(d, "held_out_views", c.dataset.held_out_views);
      maybe(d, "held_out_radius", c.dataset.held_out_radius);
      maybe(d, "held_out_height", c.dataset.held_out_height);
      maybe(d, "width", c.dataset.width);
      maybe(d, "height", c.dataset.height);
      maybe(d, "fov_deg", c.dataset.fov_deg);
      maybe(d, "noise", c.dataset.noise_sigma);
    }
    if (j.contains("train")) train_config_from_json(j.at("train"), c.train);
    if (j.contains("grid_dims")) c.mesh.dims = dims_of(j.at("grid_dims"));
    maybe(j, "isovalue", c.mesh.isovalue);
    maybe(j, "fill_voids", c.mesh.fill_voids);
    maybe(j, "void_seal", c.mesh.void_seal);
    maybe(j, "cap_boundary", c.mesh.cap_boundary);
    maybe(j, "min_component_triangles", c.mesh.min_component_triangles);
    if (j.contains("esdf_dims")) c.esdf_dims = dims_of(j.at("esdf_dims"));
    if (j.contains("eval_dims")) c.eval_dims = dims_of(j.at("eval_dims"));
    maybe(j, "arm", c.arm);
    if (j.contains("mpc")) mpc_config_from_json(j.at("mpc"), c.mpc);
    maybe(j, "episodes", c.episodes_path);
    if (j.contains("suite")) {
      const auto& s = j.at("suite");
      maybe(s, "count", c.suite.count);
      maybe(s, "height", c.suite.height);
      maybe(s, "clearance", c.suite.clearance);
      maybe(s, "min_separation", c.suite.min_separation);
    }
    maybe(j, "ground_truth_control", c.ground_truth_control);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    maybe(j, "seed", c.seed);
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed pipeline config: ") + e.what());
  }
}

json config_to_json(const PipelineConfig& c) {
  const auto& d = c.dataset;
  return {{"scene", c.scene_path},
          {"standard_scene", c.standard_scene},
          {"dataset", {{"views_per_ring", d.views_per_ring}, {"heights", d.heights}, {"radius", d.radius},
                       {"lookat", vec3_json(d.lookat)}, {"held_out_views", d.held_out_views},
                       {"held_out_radius", d.held_out_radius}, {"held_out_height", d.held_out_height},
                       {"width", d.width}, {"height", d.height}, {"fov_deg", d.fov_deg}, {"noise", d.noise_sigma}}},
          {"train", train_config_to_json(c.train)},
          {"grid_dims", dims_json(c.mesh.dims)},
          {"isovalue", c.mesh.isovalue},
          {"fill_voids", c.mesh.fill_voids},
          {"void_seal", c.mesh.void_seal},
          {"cap_boundary", c.mesh.cap_boundary},
          {"min_component_triangles", c.mesh.min_component_triangles},
          {"esdf_dims", dims_json(c.esdf_dims)},
          {"eval_dims", dims_json(c.eval_dims)},
          {"arm", c.arm},
          {"mpc", mpc_config_to_json(c.mpc)},
          {"episodes", c.episodes_path},
          {"suite", {{"count", c.suite.count}, {"height", c.suite.height}, {"clearance", c.suite.clearance},
                     {"min_separation", c.suite.min_separation}}},
          {"ground_truth_control", c.ground_truth_control},
          {"out", c.out.string()},
          {"seed", c.seed}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

Scene load_pipeline_scene(const PipelineConfig& cfg) {
  return cfg.scene_path.empty() ? standard_scene(cfg.standard_scene) : load_scene(cfg.scene_path);
}

// ---------------------------------------------------------------------------
// reports

json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["scene"] = scene;
  j["holdout_psnr_db"] = holdout_psnr;
  j["volumetric"] = {{"collision_pct", volumetric.collision_pct},
                     {"collision_pct_all", volumetric.collision_pct_all},
                     {"misclassification_pct", volumetric.misclassification_pct},
                     {"mean_l1_cm", opt(volumetric.mean_l1_cm)},
                     {"max_l1_cm", opt(volumetric.max_l1_cm)},
                     {"samples", volumetric.samples},
                     {"dims", dims_json(volumetric.dims)}};
  json acc = json::array();
  for (std::size_t i = 0; i < accuracy.thresholds_cm.size(); ++i) acc.push_back({accuracy.thresholds_cm[i], accuracy.fraction[i]});
  j["accuracy_curve"] = acc;
  json band = json::array();
  for (std::size_t i = 0; i < band_l1.bands_cm.size(); ++i) band.push_back({band_l1.bands_cm[i], band_l1.mean_l1_cm[i]});
  j["band_l1_cm"] = band;
  auto ctl = [](const ControlReport& c) {
    return json{{"max_penetration_cm", c.max_penetration_cm}, {"goal_error_cm", c.goal_error_cm},
                {"goal_error_success_cm", c.goal_error_success_cm}, {"success_rate_pct", c.success_rate_pct},
                {"episodes", c.episodes.size()}};
  };
  if (control_ground_truth) j["control_ground_truth"] = ctl(*control_ground_truth);
  if (control) j["control"] = ctl(*control);
  return j;
}

std::vector<EpisodeResult> run_suite(const ArmModel& arm, const std::vector<Episode>& episodes, const DistanceQuery& sdf,
                                     const DistanceQuery& oracle, const MpcConfig& mpc, const std::filesystem::path& dir,
                                     const std::string& prefix) {
  std::vector<EpisodeResult> out;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    MpcConfig c = mpc;
    c.seed = derive_seed(mpc.seed, "episode", i);
    out.push_back(run_episode(arm, episodes[i].start, episodes[i].goal, sdf, oracle, c));
    if (!dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "%02zu.csv", i);
      write_trajectory_csv(dir / (prefix + name), out.back());
    }
  }
  return out;
}

MetricsReport evaluate_esdf(const SdfGrid& pred, const Scene& scene, const Dims3& eval_dims,
                            const std::filesystem::path& out_dir) {
  MetricsReport r;
  const SdfFunction oracle = [&](const Vec3& p) { return analytic_sdf(scene, p); };
  r.volumetric = volumetric_metrics(pred, oracle, scene.bounds, eval_dims);
  const auto near = near_surface_samples([&](const Vec3& p) { return query(pred, p); }, oracle, scene.bounds, eval_dims, 0.05);
  r.accuracy = accuracy_curve(near, default_thresholds_cm(), 5.0);
  r.band_l1 = band_l1_curve(near, default_bands_cm());
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_volumetric_csv(out_dir / "volumetric.csv", {{"ours", pred.provenance, r.volumetric}});
    write_accuracy_csv(out_dir / "accuracy.csv", r.accuracy, r.band_l1);
    write_svg_plot(out_dir / "accuracy.svg", "SDF accuracy within 5 cm of the surface", "threshold (cm)", "fraction",
                   {{"ours", r.accuracy.thresholds_cm, r.accuracy.fraction}});
    write_svg_plot(out_dir / "band_l1.svg", "L1 error vs distance to the surface", "band (cm)", "mean L1 (cm)",
                   {{"ours", r.band_l1.bands_cm, r.band_l1.mean_l1_cm}});
  }
  return r;
}

// ---------------------------------------------------------------------------
// pipeline

namespace {

std::string key_of(const std::string& parent, const json& j) { return hex64(fnv1a(j.dump(), fnv1a(parent))); }

class KeyStore {
 public:
  explicit KeyStore(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (in) {
      try {
        in >> data_;
      } catch (const json::exception&) {
        data_ = json::object();
      }
    }
    if (!data_.is_object()) data_ = json::object();
  }
  bool fresh(const std::string& name, const std::string& key, const std::filesystem::path& artifact) const {
    return data_.contains(name) && data_[name].value("key", "") == key && std::filesystem::exists(artifact);
  }
  json& entry(const std::string& name) { return data_[name]; }
  void set(const std::string& name, const std::string& key) {
    data_[name]["key"] = key;
    std::ofstream out(path_);
    out << data_.dump(1) << "\n";
  }

 private:
  std::filesystem::path path_;
  json data_;
};

}  // namespace

MetricsReport run_pipeline(const PipelineConfig& cfg, bool force, const LogFn& log_fn) {
  cfg.validate();
  auto log = [&](const std::string& s) {
    if (log_fn) log_fn(s);
  };
  const auto& out = cfg.out;
  std::filesystem::create_directories(out);
  KeyStore keys(out / "keys.json");
  MetricsReport report;
  using clock = std::chrono::steady_clock;
  auto timed = [&](const std::string& stage, bool cached, clock::time_point t0) {
    const double s = std::chrono::duration<double>(clock::now() - t0).count();
    report.timings.push_back({stage, s, cached});
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << stage << (cached ? " (cached)" : "") << ": " << s << " s";
    log(os.str());
  };

  auto t0 = clock::now();
  // every later stage sees the scene as written, same as the standalone commands do
  save_scene(out / "scene.json", load_pipeline_scene(cfg));
  const Scene scene = load_scene(out / "scene.json");
  report.scene = cfg.scene_path.empty() ? "standard_" + std::to_string(cfg.standard_scene) : cfg.scene_path;
  const std::string scene_key = hex64(fnv1a(scene_to_json(scene).dump()));
  timed("scene", false, t0);

  // dataset
  t0 = clock::now();
  const json dcfg = config_to_json(cfg)["dataset"];
  const std::string dataset_key = key_of(scene_key, {{"dataset", dcfg}, {"seed", cfg.seed}});
  Dataset data;
  bool cached = !force && keys.fresh("dataset", dataset_key, out / "dataset" / "poses.json");
  if (cached) {
    data = load_dataset(out / "dataset");
  } else {
    save_dataset(out / "dataset", render_dataset(scene, cfg.dataset, derive_seed(cfg.seed, "dataset")));
    data = load_dataset(out / "dataset");  // train on the quantized images, as a rerun would
    keys.set("dataset", dataset_key);
  }
  timed("render-dataset", cached, t0);

  // field
  t0 = clock::now();
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  const std::string field_key = key_of(dataset_key, {{"train", train_config_to_json(tc)}, {"seed", tc.seed}});
  FieldParams<float> field;
  cached = !force && keys.fresh("field", field_key, out / "field.ckpt");
  if (cached) {
    field = load_checkpoint(out / "field.ckpt");
    report.holdout_psnr = keys.entry("field").value("psnr", 0.0);
  } else {
    auto res = train(data, tc, [&](const TrainLogEntry& e) {
      std::ostringstream os;
      os << "  step " << e.step << " loss " << e.loss << " psnr " << e.psnr;
      log(os.str());
    });
    field = std::move(res.params);
    save_checkpoint(out / "field.ckpt", field);
    write_train_log(out / "train_log.csv", res.log);
    report.holdout_psnr = res.log.empty() ? 0.0 : res.log.back().psnr;
    keys.entry("field")["psnr"] = report.holdout_psnr;
    keys.set("field", field_key);
  }
  timed("train", cached, t0);

  // density grid and mesh
  t0 = clock::now();
  const std::string mesh_key = key_of(field_key, {{"grid_dims", dims_json(cfg.mesh.dims)}, {"isovalue", cfg.mesh.isovalue},
                                                  {"fill", cfg.mesh.fill_voids}, {"seal", cfg.mesh.void_seal}, {"cap", cfg.mesh.cap_boundary},
                                                  {"min_component", cfg.mesh.min_component_triangles},
                                                  {"bounds", {vec3_json(scene.bounds.lo), vec3_json(scene.bounds.hi)}}});
  TriangleMesh mesh;
  cached = !force && keys.fresh("mesh", mesh_key, out / "mesh.ply");
  if (cached) {
    mesh = read_ply(out / "mesh.ply");
  } else {
    DensityGrid grid = sample_density_grid(field, scene.bounds, cfg.mesh.dims);
    save_density_grid(out / "density.dgrd", grid);
    auto ms = extract_mesh(grid, cfg.mesh);
    if (ms.mesh.empty()) log("warning: extracted mesh is empty");
    std::ostringstream os;
    os << "  mesh: " << ms.mesh.vertices.size() << " vertices, " << ms.mesh.triangles.size() << " triangles, "
       << ms.watertight.components << " components, " << ms.watertight.boundary_edges << " boundary edges, "
       << ms.filled_nodes << " void nodes filled";
    log(os.str());
    mesh = std::move(ms.mesh);
    write_ply(out / "mesh.ply", mesh);
    keys.set("mesh", mesh_key);
  }
  timed("extract-mesh", cached, t0);

  // ESDF
  t0 = clock::now();
  const auto support = backdrop_of(scene).primitives;
  const std::string esdf_key = key_of(mesh_key, {{"esdf_dims", dims_json(cfg.esdf_dims)}, {"scene", scene_key}});
  SdfGrid esdf;
  cached = !force && keys.fresh("esdf", esdf_key, out / "esdf.bin");
  if (cached) {
    esdf = load_sdf_grid(out / "esdf.bin");
  } else {
    esdf = bake_esdf(mesh, support, scene.bounds, cfg.esdf_dims);
    save_sdf_grid(out / "esdf.bin", esdf);
    keys.set("esdf", esdf_key);
  }
  esdf.provenance = report.scene;
  timed("bake-esdf", cached, t0);

  // volumetric evaluation
  t0 = clock::now();
  {
    auto ev = evaluate_esdf(esdf, scene, cfg.eval_dims, out);
    report.volumetric = ev.volumetric;
    report.accuracy = ev.accuracy;
    report.band_l1 = ev.band_l1;
  }
  timed("evaluate", false, t0);

  // control
  t0 = clock::now();
  const ArmModel arm = builtin_arm(cfg.arm);
  const DistanceQuery oracle = [&](const Vec3& p) { return analytic_sdf(scene, p); };
  std::vector<Episode> episodes = cfg.episodes_path.empty()
                                      ? generate_episode_suite(arm, oracle, derive_seed(cfg.seed, "suite"), cfg.suite)
                                      : load_episodes(cfg.episodes_path, arm.dof());
  save_episodes(out / "episodes.json", episodes);
  MpcConfig mpc = cfg.mpc;
  mpc.seed = derive_seed(cfg.seed, "mpc");
  if (cfg.ground_truth_control) {
    const SdfGrid gt = bake_ground_truth(scene, scene.bounds, cfg.esdf_dims);
    auto res = run_suite(arm, episodes, controller_query(gt, support), oracle, mpc, out, "traj_gt_");
    report.control_ground_truth = control_metrics(arm, oracle, res);
    write_control_csv(out / "control_gt.csv", *report.control_ground_truth);
  }
  {
    auto res = run_suite(arm, episodes, controller_query(esdf, support), oracle, mpc, out, "traj_");
    report.control = control_metrics(arm, oracle, res);
    write_control_csv(out / "control.csv", *report.control);
  }
  timed("control", false, t0);

  std::ofstream(out / "metrics.json") << std::setprecision(10) << report.to_json().dump(1) << "\n";
  // wall times vary run to run, so they live apart from the deterministic reports
  std::ofstream stages(out / "stages.csv");
  stages << "stage,seconds,cached\n";
  for (const auto& t : report.timings) stages << t.stage << "," << t.seconds << "," << (t.cached ? 1 : 0) << "\n";
  return report;
}

}  // namespace rgbmpc
