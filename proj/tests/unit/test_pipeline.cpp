#include "rgbmpc/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rgbmpc;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny(const fs::path& out) {
  PipelineConfig c;
  c.dataset.views_per_ring = 4;
  c.dataset.heights = {0.35};
  c.dataset.held_out_views = 1;
  c.dataset.width = 32;
  c.dataset.height = 24;
  c.train.steps = 20;
  c.train.rays_per_batch = 64;
  c.train.samples_per_ray = 16;
  c.train.eval_samples = 16;
  c.train.log_interval = 10;
  c.train.field.grid.levels = 3;
  c.train.field.grid.table_size = 1u << 10;
  c.mesh.dims = {31, 25, 10};
  c.esdf_dims = {16, 13, 6};
  c.eval_dims = {15, 12, 5};
  c.suite.count = 1;
  c.mpc.rollouts = 16;
  c.mpc.horizon = 6;
  c.mpc.max_steps = 5;
  c.ground_truth_control = false;
  c.out = out;
  c.seed = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config json round-trip and validation") {
  PipelineConfig c = tiny("x");
  c.mpc.noise_sigma = VecXd::Constant(7, 0.3);
  c.dataset.lookat = Vec3(0.1, 0.2, 0.3);
  c.train.loss = LossKind::SquaredNorm;
  const auto j = config_to_json(c);
  const PipelineConfig r = config_from_json(j);
  CHECK(config_to_json(r) == j);
  CHECK(r.mpc.noise_sigma.size() == 7);
  CHECK(r.train.loss == LossKind::SquaredNorm);

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"grid_dims", {1, 2}}}), InputError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"seed", "abc"}}), InputError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"train", {{"loss", "l3"}}}}), InputError);
  PipelineConfig bad = tiny("x");
  bad.scene_path = "/nonexistent/scene.json";
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = tiny("x");
  bad.standard_scene = 7;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = tiny("x");
  bad.mesh.fill_value = 1.0f;
  CHECK_THROWS_AS(bad.validate(), InputError);

  PipelineConfig fast;
  fast.apply_fast();
  CHECK(fast.mesh.dims == Dims3{151, 121, 46});
  CHECK(fast.train.steps <= 500);
}

TEST_CASE("dataset rings and held-out views") {
  DatasetConfig d;
  d.views_per_ring = 3;
  d.heights = {0.2, 0.4};
  d.held_out_views = 2;
  d.width = 8;
  d.height = 6;
  const auto ds = render_dataset(standard_scene(0), d, 1);
  REQUIRE(ds.cameras.size() == 8);
  int held = 0;
  for (bool h : ds.held_out) held += h;
  CHECK(held == 2);
  CHECK(ds.held_out[6]);
  CHECK_FALSE(ds.held_out[5]);
  // held-out poses sit off the training rings
  for (int i = 6; i < 8; ++i) CHECK(ds.cameras[i].origin().z() == doctest::Approx(d.held_out_height));
}

TEST_CASE("empty mesh bakes the support only") {
  const Scene s = standard_scene(1);
  const auto g = bake_esdf(TriangleMesh{}, backdrop_of(s).primitives, s.bounds, {6, 5, 4});
  for (int k = 0; k < 4; ++k) CHECK(g.at(2, 2, k) == doctest::Approx(grid_point(s.bounds, g.dims, 2, 2, k).z()).epsilon(1e-6));
  const auto q = controller_query(g, backdrop_of(s).primitives);
  CHECK(q(Vec3(5, 5, -0.2)) == doctest::Approx(-0.2));  // exact below the table even off the grid
}

TEST_CASE("ground-truth grid matches the analytic scene at nodes") {
  const Scene s = standard_scene(2);
  const auto g = bake_ground_truth(s, s.bounds, {11, 9, 5});
  for (int k = 0; k < 5; ++k)
    for (int i = 0; i < 11; ++i)
      CHECK(g.at(i, 4, k) == doctest::Approx(analytic_sdf(s, grid_point(s.bounds, g.dims, i, 4, k))).epsilon(1e-6));
}

TEST_CASE("pipeline runs end to end, caches stages and reruns deterministically") {
  const fs::path out = fs::temp_directory_path() / "rgbmpc_test_pipeline";
  fs::remove_all(out);
  const PipelineConfig c = tiny(out);
  const auto a = run_pipeline(c);
  for (const char* f : {"scene.json", "dataset/poses.json", "field.ckpt", "train_log.csv", "density.dgrd", "mesh.ply",
                        "esdf.bin", "episodes.json", "traj_00.csv", "control.csv", "metrics.json", "volumetric.csv",
                        "accuracy.csv", "accuracy.svg", "stages.csv", "keys.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  REQUIRE(a.control.has_value());
  CHECK(a.control->episodes.size() == 1);
  const std::string metrics = slurp(out / "metrics.json");

  const auto b = run_pipeline(c);
  int cached = 0;
  for (const auto& t : b.timings) cached += t.cached;
  CHECK(cached == 4);
  CHECK(slurp(out / "metrics.json") == metrics);
  CHECK(b.holdout_psnr == a.holdout_psnr);

  const auto f = run_pipeline(c, true);
  cached = 0;
  for (const auto& t : f.timings) cached += t.cached;
  CHECK(cached == 0);
  CHECK(slurp(out / "metrics.json") == metrics);

  // a changed downstream knob invalidates only what depends on it
  PipelineConfig d = c;
  d.esdf_dims = {17, 13, 6};
  const auto e = run_pipeline(d);
  std::vector<bool> flags;
  for (const auto& t : e.timings) flags.push_back(t.cached);
  REQUIRE(e.timings.size() >= 5);
  CHECK(e.timings[1].cached);
  CHECK(e.timings[2].cached);
  CHECK(e.timings[3].cached);
  CHECK_FALSE(e.timings[4].cached);
}
