#include "rgbmpc/mesh.hpp"
#include "rgbmpc/scene.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace rgbmpc;

namespace {

Scene spheres(std::vector<std::pair<Vec3, double>> s) {
  Scene sc;
  for (auto& [c, r] : s) sc.primitives.push_back(Primitive::sphere(c, r, Vec3::Ones()));
  return sc;
}

DensityGrid sphere_grid(double r, double h) {
  const Scene s = spheres({{Vec3::Zero(), r}});
  const double half = r + 4 * h;
  const int n = static_cast<int>(std::lround(2 * half / h)) + 1;
  const Aabb b{Vec3::Constant(-half), Vec3::Constant(-half + h * (n - 1))};
  return sample_density_grid([&](const Vec3& p) { return analytic_density(s, p); }, b, {n, n, n});
}

}  // namespace

TEST_CASE("all-zero grid gives an empty mesh") {
  DensityGrid g;
  g.bounds = {Vec3::Zero(), Vec3::Ones()};
  g.dims = {8, 8, 8};
  g.values.assign(grid_count(g.dims), 0.0f);
  CHECK(marching_cubes(g).empty());
  MarchingCubesOptions capped;
  capped.cap_boundary = true;
  CHECK(marching_cubes(g, capped).empty());
}

TEST_CASE("sphere isosurface: radii, closure, topology") {
  const double r = 0.1, h = 0.0025;
  const DensityGrid g = sphere_grid(r, h);
  const TriangleMesh m = marching_cubes(g);
  REQUIRE_FALSE(m.empty());
  for (const auto& v : m.vertices) CHECK(std::abs(v.norm() - r) <= h);
  const auto w = watertight_report(m);
  CHECK(w.boundary_edges == 0);
  CHECK(w.non_manifold_edges == 0);
  CHECK(w.components == 1);
  REQUIRE(w.euler_characteristics.size() == 1);
  CHECK(w.euler_characteristics[0] == 2);
  const double vol = mesh_volume(m);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * M_PI * r * r * r).epsilon(0.05));
}

TEST_CASE("vertices sit on the isovalue of the interpolated grid") {
  // smooth radial density so edge interpolation is meaningful
  const Aabb b{Vec3::Constant(-0.2), Vec3::Constant(0.2)};
  const DensityGrid g = sample_density_grid([](const Vec3& p) { return std::max(0.0, 10.0 * (1.0 - p.norm() / 0.15)); }, b, {41, 41, 41});
  const auto m = marching_cubes(g);
  REQUIRE_FALSE(m.empty());
  const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
  const double range = *hi - *lo;
  for (const auto& v : m.vertices) CHECK(std::abs(g.interpolate(v) - 2.5) <= 1e-3 * range);
}

TEST_CASE("single triangle and two components") {
  TriangleMesh t;
  t.vertices = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
  t.triangles = {{0, 1, 2}};
  const auto w = watertight_report(t);
  CHECK(w.boundary_edges == 3);
  CHECK(w.components == 1);

  const Scene s = spheres({{Vec3(-0.1, 0, 0), 0.05}, {Vec3(0.1, 0, 0), 0.05}});
  const Aabb b{Vec3(-0.2, -0.1, -0.1), Vec3(0.2, 0.1, 0.1)};
  const auto g = sample_density_grid([&](const Vec3& p) { return analytic_density(s, p); }, b, {81, 41, 41});
  const auto two = watertight_report(marching_cubes(g));
  CHECK(two.components == 2);
  CHECK(two.watertight());
}

TEST_CASE("cleanup drops floaters and leaves clean meshes alone") {
  const auto sphere = marching_cubes(sphere_grid(0.05, 0.005));
  CleanupReport rep;
  const auto same = mesh_cleanup(sphere, 20, &rep);
  CHECK(mesh_hash(same) == mesh_hash(sphere));
  CHECK(rep.components_removed == 0);

  TriangleMesh noisy = sphere;
  const int base = static_cast<int>(noisy.vertices.size());
  for (const Vec3& v : {Vec3(1, 1, 1), Vec3(1.01, 1, 1), Vec3(1, 1.01, 1), Vec3(1, 1, 1.01)}) noisy.vertices.push_back(v);
  for (const std::array<int, 3>& t : {std::array<int, 3>{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}})
    noisy.triangles.push_back({base + t[0], base + t[1], base + t[2]});
  noisy.triangles.push_back({0, 0, 1});  // degenerate
  const auto cleaned = mesh_cleanup(noisy, 20, &rep);
  CHECK(rep.components_removed == 1);
  CHECK(rep.triangles_removed == 4);
  CHECK(rep.degenerate_removed == 1);
  CHECK(rep.vertices_removed == 4);
  CHECK(mesh_hash(cleaned) == mesh_hash(sphere));
}

TEST_CASE("coarse sampling is a subsample of fine sampling") {
  const Scene s = standard_scene(0);
  const Aabb b = default_workspace();
  auto dens = [&](const Vec3& p) { return analytic_density(s, p); };
  const auto coarse = sample_density_grid(dens, b, {16, 13, 6});
  const auto fine = sample_density_grid(dens, b, {31, 25, 11});
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 13; ++j)
      for (int i = 0; i < 16; ++i) CHECK(coarse.at(i, j, k) == fine.at(2 * i, 2 * j, 2 * k));
}

TEST_CASE("enclosed voids are filled, open pockets are not") {
  // hollow shell: dense between r = 0.06 and 0.1, empty inside
  const Aabb b{Vec3::Constant(-0.15), Vec3::Constant(0.15)};
  auto shell = [](const Vec3& p) { const double r = p.norm(); return r > 0.06 && r < 0.1 ? 50.0 : 0.0; };
  auto g = sample_density_grid(shell, b, {61, 61, 61});
  const std::size_t filled = fill_enclosed_voids(g, 2.5, 50.0f);
  CHECK(filled > 0);
  CHECK(g.at(30, 30, 30) == 50.0f);
  CHECK(g.at(0, 30, 30) == 0.0f);
  CHECK(watertight_report(marching_cubes(g)).components == 1);
  // a pocket touching the open side stays empty
  auto cup = [](const Vec3& p) { const double r = p.norm(); return r > 0.06 && r < 0.1 && p.z() < 0.0 ? 50.0 : 0.0; };
  auto c = sample_density_grid(cup, b, {61, 61, 61});
  fill_enclosed_voids(c, 2.5, 50.0f);
  CHECK(c.at(30, 30, 30) == 0.0f);
  fill_enclosed_voids(c, 2.5, 50.0f, 2);
  CHECK(c.at(30, 30, 30) == 0.0f);  // a 12 cm mouth is far wider than the seal
}

TEST_CASE("sealing closes pockets behind narrow channels") {
  // the same shell drilled along +x with an 8 mm hole (under two nodes wide at 5 mm spacing)
  const Aabb b{Vec3::Constant(-0.15), Vec3::Constant(0.15)};
  auto drilled = [](const Vec3& p) {
    const double r = p.norm();
    const bool hole = p.x() > 0 && std::hypot(p.y(), p.z()) < 0.004;
    return r > 0.06 && r < 0.1 && !hole ? 50.0 : 0.0;
  };
  auto open = sample_density_grid(drilled, b, {61, 61, 61});
  auto sealed = open;
  CHECK(fill_enclosed_voids(open, 2.5, 50.0f) == 0);
  CHECK(open.at(30, 30, 30) == 0.0f);
  CHECK(fill_enclosed_voids(sealed, 2.5, 50.0f, 2) > 0);
  CHECK(sealed.at(30, 30, 30) == 50.0f);
  // free space outside the shell is untouched
  int raised_outside = 0;
  for (int k = 0; k < 61; ++k)
    for (int j = 0; j < 61; ++j)
      for (int i = 0; i < 61; ++i)
        raised_outside += grid_point(b, sealed.dims, i, j, k).norm() > 0.11 && sealed.at(i, j, k) != open.at(i, j, k);
  CHECK(raised_outside == 0);
  CHECK_THROWS_AS(fill_enclosed_voids(sealed, 2.5, 50.0f, -1), InputError);
}

TEST_CASE("boundary caps close clipped surfaces") {
  const Scene s = spheres({{Vec3::Zero(), 0.1}});
  const Aabb b{Vec3(-0.15, -0.15, 0.0), Vec3(0.15, 0.15, 0.15)};  // cuts the sphere in half
  const auto g = sample_density_grid([&](const Vec3& p) { return analytic_density(s, p); }, b, {61, 61, 31});
  const auto open = watertight_report(marching_cubes(g));
  CHECK(open.boundary_edges > 0);
  MarchingCubesOptions o;
  o.cap_boundary = true;
  const auto capped = marching_cubes(g, o);
  const auto w = watertight_report(capped);
  CHECK(w.watertight());
  CHECK(w.cap_triangles > 0);
  CHECK(mesh_volume(capped) == doctest::Approx(2.0 / 3.0 * M_PI * 1e-3).epsilon(0.06));
}

TEST_CASE("mesh and density files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "rgbmpc_test_mesh";
  std::filesystem::create_directories(dir);
  auto m = marching_cubes(sphere_grid(0.05, 0.005));
  compute_vertex_normals(m);
  // step density gives a terraced surface; normals still point outward
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(m.normals[i].dot(m.vertices[i].normalized()) > 0.5);
  write_ply(dir / "m.ply", m);
  const auto r = read_ply(dir / "m.ply");
  CHECK(r.triangles == m.triangles);
  REQUIRE(r.vertices.size() == m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK((r.vertices[i] - m.vertices[i]).norm() < 1e-7);
  CHECK(r.normals.size() == m.normals.size());

  const auto g = sphere_grid(0.05, 0.01);
  save_density_grid(dir / "g.dgrd", g);
  const auto h = load_density_grid(dir / "g.dgrd");
  CHECK(h.values == g.values);
  CHECK(h.dims == g.dims);
  CHECK(h.bounds == g.bounds);

  std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nend_header\n";
  CHECK_THROWS_AS(read_ply(dir / "bad.ply"), InputError);
  std::ofstream(dir / "bad.dgrd") << "DGRDjunk";
  CHECK_THROWS_AS(load_density_grid(dir / "bad.dgrd"), InputError);
  DensityGrid neg = g;
  neg.values[3] = -1.0f;
  CHECK_THROWS_AS(neg.validate(), NumericError);
}
