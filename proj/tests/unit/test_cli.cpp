// Drives the rgbmpc executable (path in RGBMPC_CLI) as a subprocess.

#include "rgbmpc/pipeline.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rgbmpc;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "rgbmpc_test_cli";

struct Run {
  int code = -1;
  std::string err;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const char* exe = std::getenv("RGBMPC_CLI");
  REQUIRE_MESSAGE(exe != nullptr, "RGBMPC_CLI is not set");
  fs::create_directories(kDir);
  const std::string cmd = std::string("\"") + exe + "\" " + args + " >" + (kDir / "stdout.txt").string() + " 2>" +
                          (kDir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(kDir / "stdout.txt");
  r.err = slurp(kDir / "stderr.txt");
  return r;
}

std::string p(const fs::path& f) { return "\"" + f.string() + "\""; }

const char* kTinyConfig = R"({
  "dataset": {"views_per_ring": 4, "heights": [0.35], "held_out_views": 1, "width": 32, "height": 24},
  "train": {"steps": 20, "rays_per_batch": 64, "samples_per_ray": 16, "eval_samples": 16, "log_interval": 10,
            "levels": 3, "table_size": 1024},
  "grid_dims": [31, 25, 10], "esdf_dims": [16, 13, 6], "eval_dims": [15, 12, 5],
  "suite": {"count": 1}, "mpc": {"rollouts": 16, "horizon": 6, "max_steps": 5},
  "ground_truth_control": false, "seed": 5
})";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("no-such-command").code == 2);
  CHECK(cli("evaluate --scene x.json").code == 2);  // --esdf missing
  CHECK(cli("--help").code == 0);
}

TEST_CASE("missing and corrupt inputs exit with 2") {
  fs::create_directories(kDir);
  CHECK(cli("render-dataset --scene " + p(kDir / "nope.json")).code == 2);
  std::ofstream(kDir / "corrupt.json") << "{\"primitives\": [";
  const auto r = cli("render-dataset --scene " + p(kDir / "corrupt.json"));
  CHECK(r.code == 2);
  CHECK(r.err.find("input error") != std::string::npos);
  std::ofstream(kDir / "corrupt.bin") << "ESDF\x01";
  save_scene(kDir / "scene0.json", standard_scene(0));
  CHECK(cli("evaluate --esdf " + p(kDir / "corrupt.bin") + " --scene " + p(kDir / "scene0.json")).code == 2);
  CHECK(cli("extract-mesh --field " + p(kDir / "corrupt.bin")).code == 2);
  CHECK(cli("--config " + p(kDir / "corrupt.json") + " pipeline").code == 2);
}

TEST_CASE("extract-mesh on an empty density grid warns and succeeds") {
  DensityGrid g;
  g.bounds = default_workspace();
  g.dims = {10, 8, 4};
  g.values.assign(grid_count(g.dims), 0.0f);
  save_density_grid(kDir / "zero.dgrd", g);
  const auto r = cli("--out " + p(kDir / "empty.ply") + " extract-mesh --density " + p(kDir / "zero.dgrd"));
  CHECK(r.code == 0);
  CHECK(r.err.find("empty") != std::string::npos);
  CHECK(read_ply(kDir / "empty.ply").empty());
}

TEST_CASE("evaluate rejects a grid that does not cover the scene") {
  const Scene s = standard_scene(0);
  Aabb small = s.bounds;
  small.hi.x() -= 0.1;
  save_sdf_grid(kDir / "small.bin", bake_ground_truth(s, small, {8, 8, 4}));
  save_scene(kDir / "scene0.json", s);
  const auto r = cli("evaluate --esdf " + p(kDir / "small.bin") + " --scene " + p(kDir / "scene0.json"));
  CHECK(r.code == 2);
  CHECK(r.err.find("bounds") != std::string::npos);
}

TEST_CASE("pipeline equals the stages run one by one") {
  const fs::path cfg = kDir / "tiny.json";
  std::ofstream(cfg) << kTinyConfig;
  const fs::path pipe = kDir / "pipe", st = kDir / "stages";
  fs::remove_all(pipe);
  fs::remove_all(st);
  const std::string base = "--config " + p(cfg) + " ";
  REQUIRE(cli(base + "--out " + p(pipe) + " pipeline").code == 0);
  const auto metrics = nlohmann::json::parse(slurp(pipe / "metrics.json"));

  REQUIRE(cli(base + "--out " + p(st / "scene.json") + " scene-gen --standard 0").code == 0);
  REQUIRE(cli(base + "--out " + p(st / "dataset") + " render-dataset --scene " + p(st / "scene.json")).code == 0);
  REQUIRE(cli(base + "--out " + p(st / "field.ckpt") + " train --dataset " + p(st / "dataset")).code == 0);
  CHECK(slurp(st / "field.ckpt") == slurp(pipe / "field.ckpt"));
  REQUIRE(cli(base + "--out " + p(st / "mesh.ply") + " extract-mesh --field " + p(st / "field.ckpt")).code == 0);
  CHECK(mesh_hash(read_ply(st / "mesh.ply")) == mesh_hash(read_ply(pipe / "mesh.ply")));
  REQUIRE(cli(base + "--out " + p(st / "esdf.bin") + " bake-esdf --mesh " + p(st / "mesh.ply") + " --scene " +
              p(st / "scene.json"))
              .code == 0);
  CHECK(load_sdf_grid(st / "esdf.bin").values == load_sdf_grid(pipe / "esdf.bin").values);
  const auto ev = cli(base + "--out " + p(st / "eval") + " evaluate --esdf " + p(st / "esdf.bin") + " --scene " +
                      p(st / "scene.json"));
  REQUIRE(ev.code == 0);
  const auto evj = nlohmann::json::parse(ev.out);
  CHECK(evj["volumetric"] == metrics["volumetric"]);
  CHECK(evj["accuracy_curve"] == metrics["accuracy_curve"]);
  const auto ctl = cli(base + "--out " + p(st / "control") + " control --esdf " + p(st / "esdf.bin") + " --scene " +
                       p(st / "scene.json"));
  REQUIRE(ctl.code == 0);
  CHECK(slurp(st / "control" / "episodes.json") == slurp(pipe / "episodes.json"));
  CHECK(slurp(st / "control" / "traj_00.csv") == slurp(pipe / "traj_00.csv"));
  CHECK(slurp(st / "control" / "control.csv") == slurp(pipe / "control.csv"));
}

TEST_CASE("environment variables feed the global options") {
  fs::create_directories(kDir);
  const fs::path out = kDir / "env_scene.json";
  fs::remove(out);
  const std::string cmd = "RGBMPC_OUT=" + p(out) + " RGBMPC_SEED=9";
  const char* exe = std::getenv("RGBMPC_CLI");
  REQUIRE(exe != nullptr);
  const int status = std::system((cmd + " \"" + exe + "\" scene-gen 2>/dev/null").c_str());
  CHECK(WEXITSTATUS(status) == 0);
  REQUIRE(fs::exists(out));
  save_scene(kDir / "direct_scene.json", generate_scene(9));
  CHECK(slurp(out) == slurp(kDir / "direct_scene.json"));
}
