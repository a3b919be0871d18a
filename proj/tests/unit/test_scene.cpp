#include "rgbmpc/scene.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace rgbmpc;

namespace {

Scene sphere_scene(const Vec3& c, double r) {
  Scene s;
  s.primitives.push_back(Primitive::sphere(c, r, Vec3(1, 0, 0)));
  s.bounds = {Vec3::Constant(-2), Vec3::Constant(2)};
  return s;
}

// Sphere tracing along the ray against the analytic SDF: an oracle independent of intersect().
double sphere_trace(const Scene& s, const Vec3& o, const Vec3& d) {
  double t = 0;
  for (int i = 0; i < 2000; ++i) {
    const double h = analytic_sdf(s, o + t * d);
    if (h < 1e-9) return t;
    t += h;
    if (t > 100) break;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

TEST_CASE("unit sphere distances") {
  const Scene s = sphere_scene(Vec3::Zero(), 1.0);
  CHECK(analytic_sdf(s, Vec3::Zero()) == doctest::Approx(-1.0));
  CHECK(analytic_sdf(s, Vec3(2, 0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("union of two spheres takes the min") {
  Scene s = sphere_scene(Vec3(3, 0, 0), 1.0);
  s.primitives.push_back(Primitive::sphere(Vec3(-3, 0, 0), 1.0, Vec3::Ones()));
  CHECK(analytic_sdf(s, Vec3::Zero()) == doctest::Approx(2.0));
  // dense sampling around the origin never finds a closer surface point than 2
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  double best = 1e9;
  for (int i = 0; i < 20000; ++i) {
    Vec3 d(n(rng), n(rng), n(rng));
    d.normalize();
    for (const Vec3& c : {Vec3(3, 0, 0), Vec3(-3, 0, 0)}) best = std::min(best, (c + d).norm());
  }
  CHECK(best >= 2.0 - 1e-12);
  CHECK(best == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("box and cylinder distances") {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.translation() = Vec3(1, 0, 0);
  const auto box = Primitive::box(pose, Vec3(0.1, 0.2, 0.3), Vec3::Ones());
  CHECK(box.sdf(Vec3(1, 0, 0)) == doctest::Approx(-0.1));
  CHECK(box.sdf(Vec3(1.5, 0, 0)) == doctest::Approx(0.4));
  // corner region: distance to the corner point
  CHECK(box.sdf(Vec3(1.2, 0.3, 0.4)) == doctest::Approx(std::sqrt(0.03)));
  const auto cyl = Primitive::cylinder(Eigen::Isometry3d::Identity(), 0.1, 0.4, Vec3::Ones());
  CHECK(cyl.sdf(Vec3::Zero()) == doctest::Approx(-0.1));
  CHECK(cyl.sdf(Vec3(0.3, 0, 0)) == doctest::Approx(0.2));
  CHECK(cyl.sdf(Vec3(0, 0, 0.5)) == doctest::Approx(0.3));
  CHECK(cyl.sdf(Vec3(0.4, 0, 0.6)) == doctest::Approx(std::sqrt(0.09 + 0.16)));
  const auto plane = Primitive::half_space(Eigen::Isometry3d::Identity(), Vec3::Ones());
  CHECK(plane.sdf(Vec3(5, -3, 0.25)) == doctest::Approx(0.25));
  CHECK_FALSE(plane.bounding_box().has_value());
}

TEST_CASE("density is a hard step, surface counts as inside") {
  const Scene s = sphere_scene(Vec3::Zero(), 0.5);
  CHECK(analytic_density(s, Vec3::Zero()) == 50.0);
  CHECK(analytic_density(s, Vec3(1, 0, 0)) == 0.0);
  CHECK(analytic_density(s, Vec3(0.5, 0, 0)) == 50.0);
}

TEST_CASE("scene validation") {
  Scene s;
  s.bounds = {Vec3::Zero(), Vec3::Ones()};
  CHECK_THROWS_AS(s.validate(), InputError);
  s.primitives.push_back(Primitive::sphere(Vec3(5, 5, 5), 0.1, Vec3::Ones()));
  CHECK_THROWS_AS(s.validate(), InputError);  // does not touch the bounds
  s.primitives[0] = Primitive::sphere(Vec3(0.5, 0.5, 0.5), -0.1, Vec3::Ones());
  CHECK_THROWS_AS(s.validate(), InputError);
  s.primitives[0] = Primitive::sphere(Vec3(0.5, 0.5, 0.5), 0.1, Vec3::Ones());
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("render: camera facing away sees only background") {
  const Scene s = sphere_scene(Vec3::Zero(), 0.5);
  CameraPose cam;
  cam.intrinsics = Intrinsics::from_fov(16, 12, 1.0);
  cam.world_from_camera = look_at(Vec3(0, -3, 0), Vec3(0, -6, 0));
  const Image img = render_image(s, cam);
  for (const auto& p : img.pixels) CHECK((p - s.background.cast<float>()).norm() < 1e-6f);
}

TEST_CASE("render: head-on red sphere pixel stays below its albedo") {
  const Scene s = sphere_scene(Vec3::Zero(), 0.5);
  CameraPose cam;
  cam.intrinsics = Intrinsics::from_fov(17, 17, 0.8);
  cam.world_from_camera = look_at(Vec3(0, -3, 0.5), Vec3::Zero());
  const Image img = render_image(s, cam);
  const Vec3f c = img.at(8, 8);
  CHECK(c.x() > 0.2f);
  CHECK(c.x() <= 1.0f);
  CHECK(c.y() <= 1e-6f);
  CHECK(c.z() <= 1e-6f);
}

TEST_CASE("render depth agrees with sphere tracing") {
  const Scene s = standard_scene(1);
  CameraPose cam;
  cam.intrinsics = Intrinsics::from_fov(40, 30, 1.0);
  cam.world_from_camera = look_at(Vec3(0.4, -0.4, 0.35), Vec3(0, 0, 0.03));
  const auto depth = render_depth(s, cam);
  int checked = 0;
  for (int y = 0; y < 30; y += 3) {
    for (int x = 0; x < 40; x += 3) {
      const double d = depth[y * 40 + x];
      const Vec3 dir = cam.pixel_direction(x, y);
      const double t = sphere_trace(s, cam.origin(), dir);
      if (!std::isfinite(d)) {
        CHECK_FALSE(std::isfinite(t));
        continue;
      }
      CHECK(std::abs(d - t) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("camera ring geometry") {
  const Vec3 look(0.1, -0.2, 0.05);
  SUBCASE("single pose looks through lookat") {
    const auto p = camera_ring(1, 0.5, {0.3}, look);
    REQUIRE(p.size() == 1);
    const Vec3 o = p[0].origin();
    const Vec3 axis = p[0].world_from_camera.linear().col(2);
    const Vec3 to = look - o;
    CHECK((to - to.dot(axis) * axis).norm() < 1e-9);
    CHECK(to.dot(axis) > 0);
  }
  SUBCASE("four poses are 90 degrees apart") {
    const auto p = camera_ring(4, 0.5, {0.3}, look);
    for (int k = 0; k < 4; ++k) {
      const Vec3 a = p[k].origin() - look, b = p[(k + 1) % 4].origin() - look;
      const double ang = std::atan2(a.x() * b.y() - a.y() * b.x(), a.x() * b.x() + a.y() * b.y());
      CHECK(ang == doctest::Approx(M_PI / 2).epsilon(1e-12));
    }
  }
  SUBCASE("300 poses on three rings, all at the ring radius") {
    const auto p = camera_ring(100, 0.7, {0.1, 0.3, 0.5}, look);
    CHECK(p.size() == 300);
    for (const auto& c : p) CHECK(std::abs((c.origin() - look).head<2>().norm() - 0.7) < 1e-9);
  }
  CHECK_THROWS_AS(camera_ring(0, 0.5, {0.3}, look), InputError);
  CHECK_THROWS_AS(camera_ring(3, 0.0, {0.3}, look), InputError);
}

TEST_CASE("scene generator and standard scenes") {
  for (int i = 0; i < 3; ++i) {
    const Scene s = standard_scene(i);
    CHECK_NOTHROW(s.validate());
    int objects = 0;
    for (const auto& p : s.primitives) objects += p.kind != PrimitiveKind::HalfSpace;
    CHECK(objects >= 8);
    CHECK(objects <= 12);
  }
  const Scene a = generate_scene(42), b = generate_scene(42);
  CHECK(scene_to_json(a) == scene_to_json(b));
  CHECK(scene_to_json(a) != scene_to_json(generate_scene(43)));
  CHECK(three_object_scene().primitives.size() >= 3);
}

TEST_CASE("scene and dataset files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "rgbmpc_test_scene";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const Scene s = standard_scene(2);
  save_scene(dir / "scene.json", s);
  const Scene r = load_scene(dir / "scene.json");
  // rotations pass through a quaternion, so allow rounding
  REQUIRE(r.primitives.size() == s.primitives.size());
  for (std::size_t i = 0; i < s.primitives.size(); ++i) {
    const auto &a = r.primitives[i], &b = s.primitives[i];
    CHECK(a.kind == b.kind);
    CHECK(a.size == b.size);
    CHECK(a.albedo == b.albedo);
    CHECK((a.pose.matrix() - b.pose.matrix()).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK(r.bounds.lo == s.bounds.lo);
  CHECK(r.bounds.hi == s.bounds.hi);
  // a second trip through the file is the same scene again
  save_scene(dir / "again.json", r);
  CHECK((load_scene(dir / "again.json").primitives[2].pose.matrix() - r.primitives[2].pose.matrix()).norm() < 1e-14);
  for (const Vec3& p : {Vec3(0, 0, 0.05), Vec3(0.2, -0.1, 0.02), Vec3(-0.3, 0.2, 0.2)})
    CHECK(analytic_sdf(r, p) == doctest::Approx(analytic_sdf(s, p)).epsilon(1e-12));

  Dataset d;
  d.backdrop = backdrop_of(s);
  d.cameras = camera_ring(2, 0.5, {0.3}, Vec3::Zero(), Intrinsics::from_fov(8, 6, 1.0));
  for (const auto& c : d.cameras) d.images.push_back(render_image(s, c));
  d.held_out = {false, true};
  save_dataset(dir / "ds", d);
  const Dataset e = load_dataset(dir / "ds");
  REQUIRE(e.cameras.size() == 2);
  CHECK(e.held_out == d.held_out);
  CHECK(e.cameras[1].world_from_camera.matrix().isApprox(d.cameras[1].world_from_camera.matrix(), 1e-12));
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_scene(dir / "bad.json"), InputError);
  CHECK_THROWS_AS(load_scene(dir / "missing.json"), InputError);
}

TEST_CASE("optional pixel noise is zero-mean and seeded") {
  const Scene s = sphere_scene(Vec3::Zero(), 0.5);
  CameraPose cam;
  cam.intrinsics = Intrinsics::from_fov(32, 32, 1.0);
  cam.world_from_camera = look_at(Vec3(0, -3, 0), Vec3(0, -6, 0));
  RenderOptions ro;
  ro.noise_sigma = 0.02;
  ro.noise_seed = 5;
  const Image a = render_image(s, cam, ro), b = render_image(s, cam, ro);
  CHECK(a.pixels == b.pixels);
  const Image clean = render_image(s, cam);
  double mean = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) mean += (a.pixels[i] - clean.pixels[i]).sum();
  mean /= 3.0 * a.pixels.size();
  CHECK(std::abs(mean) < 0.005);
}
