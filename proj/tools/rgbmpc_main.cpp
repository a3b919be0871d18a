// rgbmpc: command-line front end for every pipeline stage.

#include "rgbmpc/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

using namespace rgbmpc;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool force = false;
  bool fast = false;
};

void say(const std::string& s) { std::cerr << s << std::endl; }

class StageTimer {
 public:
  explicit StageTimer(std::string name) : name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::fprintf(stderr, "%s: %.2f s\n", name_.c_str(), s);
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point t0_;
};

PipelineConfig make_config(const Globals& g) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.fast) c.apply_fast();
  if (g.seed_set) c.seed = g.seed;
  if (!g.out.empty()) c.out = g.out;
  return c;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw InputError(std::string("missing --") + what);
  if (!fs::exists(path)) throw InputError(std::string(what) + " not found: " + path);
}

fs::path out_path(const Globals& g, const char* fallback) { return g.out.empty() ? fs::path(fallback) : fs::path(g.out); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void print_metrics(const MetricsReport& r) {
  std::cout << r.to_json().dump(1) << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posed RGB images to a radiance field, mesh, ESDF and a sampling-based arm controller."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "pipeline config JSON")->envname("RGBMPC_CONFIG");
  app.add_option("--out", g.out, "output file or directory")->envname("RGBMPC_OUT");
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { g.seed = s; g.seed_set = true; },
                                         "root seed for every stochastic stage")
      ->envname("RGBMPC_SEED");
  app.add_option("--threads", g.threads, "worker thread cap (0 = hardware)")->envname("RGBMPC_THREADS");
  app.add_flag("--force", g.force, "ignore cached artifacts")->envname("RGBMPC_FORCE");
  app.add_flag("--fast", g.fast, "desk-scale grid dims and a shorter training run")->envname("RGBMPC_FAST");

  // scene-gen
  auto* scene_gen = app.add_subcommand("scene-gen", "write a random or standard tabletop scene");
  int standard = -1;
  SceneGenOptions sg;
  scene_gen->add_option("--standard", standard, "standard scene index (0-2) instead of a random one");
  scene_gen->add_option("--min-primitives", sg.min_primitives);
  scene_gen->add_option("--max-primitives", sg.max_primitives);

  // render-dataset
  auto* render = app.add_subcommand("render-dataset", "render posed RGB views of a scene");
  std::string scene_path;
  render->add_option("--scene", scene_path, "scene JSON")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "fit the radiance field to a dataset");
  std::string dataset_dir;
  train_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();

  // extract-mesh
  auto* extract = app.add_subcommand("extract-mesh", "sample density and run marching cubes");
  std::string field_path, density_in, density_out;
  extract->add_option("--field", field_path, "field checkpoint");
  extract->add_option("--density", density_in, "existing density grid instead of a checkpoint");
  extract->add_option("--save-density", density_out, "also write the sampled density grid");

  // bake-esdf
  auto* bake = app.add_subcommand("bake-esdf", "bake a signed distance grid from a mesh");
  std::string mesh_path;
  bool ground_truth = false;
  bake->add_option("--mesh", mesh_path, "mesh PLY");
  bake->add_option("--scene", scene_path, "scene JSON (support planes, bounds)")->required();
  bake->add_flag("--ground-truth", ground_truth, "bake the analytic scene SDF instead of a mesh");

  // control
  auto* control = app.add_subcommand("control", "run the episode suite against an ESDF");
  std::string esdf_path, episodes_path;
  control->add_option("--esdf", esdf_path, "ESDF grid")->required();
  control->add_option("--scene", scene_path, "scene JSON (oracle for penetration)")->required();
  control->add_option("--episodes", episodes_path, "episode suite JSON (generated when omitted)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "volumetric metrics of an ESDF against the scene");
  evaluate->add_option("--esdf", esdf_path, "ESDF grid")->required();
  evaluate->add_option("--scene", scene_path, "scene JSON")->required();

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write the metrics report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    set_thread_count(g.threads);
    if (*scene_gen) {
      StageTimer t("scene-gen");
      const PipelineConfig c = make_config(g);
      const Scene s = standard >= 0 ? standard_scene(standard) : generate_scene(c.seed, sg);
      const fs::path out = out_path(g, "scene.json");
      ensure_parent(out);
      save_scene(out, s);
      say("wrote " + out.string());
    } else if (*render) {
      StageTimer t("render-dataset");
      require_file(scene_path, "scene");
      const PipelineConfig c = make_config(g);
      const Dataset d = render_dataset(load_scene(scene_path), c.dataset, derive_seed(c.seed, "dataset"));
      const fs::path out = out_path(g, "dataset");
      save_dataset(out, d);
      say("wrote " + std::to_string(d.images.size()) + " views to " + out.string());
    } else if (*train_cmd) {
      StageTimer t("train");
      if (!fs::is_directory(dataset_dir)) throw InputError("dataset directory not found: " + dataset_dir);
      PipelineConfig c = make_config(g);
      c.train.seed = derive_seed(c.seed, "train");
      const Dataset d = load_dataset(dataset_dir);
      auto res = train(d, c.train, [](const TrainLogEntry& e) {
        std::fprintf(stderr, "step %d loss %.6f psnr %.2f\n", e.step, e.loss, e.psnr);
      });
      const fs::path out = out_path(g, "field.ckpt");
      ensure_parent(out);
      save_checkpoint(out, res.params);
      write_train_log(out.parent_path() / (out.stem().string() + "_log.csv"), res.log);
      say("wrote " + out.string());
    } else if (*extract) {
      StageTimer t("extract-mesh");
      const PipelineConfig c = make_config(g);
      DensityGrid grid;
      if (!density_in.empty()) {
        require_file(density_in, "density");
        grid = load_density_grid(density_in);
      } else {
        require_file(field_path, "field");
        const auto field = load_checkpoint(field_path);
        grid = sample_density_grid(field, field.config.grid.bounds, c.mesh.dims);
      }
      if (!density_out.empty()) {
        ensure_parent(density_out);
        save_density_grid(density_out, grid);
      }
      auto ms = extract_mesh(grid, c.mesh);
      if (ms.mesh.empty()) say("warning: no surface at the isovalue; the mesh is empty");
      const fs::path out = out_path(g, "mesh.ply");
      ensure_parent(out);
      write_ply(out, ms.mesh);
      std::fprintf(stderr, "%zu vertices, %zu triangles, %zu boundary edges, %zu non-manifold edges\n",
                   ms.mesh.vertices.size(), ms.mesh.triangles.size(), ms.watertight.boundary_edges,
                   ms.watertight.non_manifold_edges);
    } else if (*bake) {
      StageTimer t("bake-esdf");
      require_file(scene_path, "scene");
      const PipelineConfig c = make_config(g);
      const Scene s = load_scene(scene_path);
      SdfGrid grid;
      if (ground_truth) {
        grid = bake_ground_truth(s, s.bounds, c.esdf_dims);
      } else {
        require_file(mesh_path, "mesh");
        grid = bake_esdf(read_ply(mesh_path), backdrop_of(s).primitives, s.bounds, c.esdf_dims);
      }
      const fs::path out = out_path(g, "esdf.bin");
      ensure_parent(out);
      save_sdf_grid(out, grid);
      say("wrote " + out.string());
    } else if (*control) {
      StageTimer t("control");
      require_file(esdf_path, "esdf");
      require_file(scene_path, "scene");
      const PipelineConfig c = make_config(g);
      const Scene s = load_scene(scene_path);
      const SdfGrid grid = load_sdf_grid(esdf_path);
      const ArmModel arm = builtin_arm(c.arm);
      const DistanceQuery oracle = [&](const Vec3& p) { return analytic_sdf(s, p); };
      const auto episodes = !episodes_path.empty() ? load_episodes(episodes_path, arm.dof())
                                                   : generate_episode_suite(arm, oracle, derive_seed(c.seed, "suite"), c.suite);
      const fs::path out = out_path(g, "control");
      fs::create_directories(out);
      save_episodes(out / "episodes.json", episodes);
      MpcConfig mpc = c.mpc;
      mpc.seed = derive_seed(c.seed, "mpc");
      const auto res = run_suite(arm, episodes, controller_query(grid, backdrop_of(s).primitives), oracle, mpc, out);
      const auto rep = control_metrics(arm, oracle, res);
      write_control_csv(out / "control.csv", rep);
      std::printf("max_penetration_cm %.4f goal_error_cm %.4f success_rate_pct %.1f\n", rep.max_penetration_cm,
                  rep.goal_error_cm, rep.success_rate_pct);
    } else if (*evaluate) {
      StageTimer t("evaluate");
      require_file(esdf_path, "esdf");
      require_file(scene_path, "scene");
      const PipelineConfig c = make_config(g);
      const Scene s = load_scene(scene_path);
      SdfGrid grid = load_sdf_grid(esdf_path);
      grid.provenance = fs::path(esdf_path).filename().string();
      const auto r = evaluate_esdf(grid, s, c.eval_dims, out_path(g, "eval"));
      print_metrics(r);
    } else if (*pipeline) {
      StageTimer t("pipeline");
      const PipelineConfig c = make_config(g);
      print_metrics(run_pipeline(c, g.force, say));
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << std::endl;
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
