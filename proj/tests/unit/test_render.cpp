#include "rgbmpc/render.hpp"

#include <doctest.h>

#include <random>

using namespace rgbmpc;

namespace {

FieldConfig tiny_field(const Aabb& bounds) {
  FieldConfig c;
  c.grid.levels = 3;
  c.grid.table_size = 1u << 8;
  c.grid.bounds = bounds;
  c.density_hidden = 8;
  c.geometry_features = 4;
  c.color_hidden = 8;
  return c;
}

Ray unit_ray() {
  Ray r;
  r.origin = Vec3::Zero();
  r.dir = Vec3::UnitX();
  r.t_near = 0;
  r.t_far = 1;
  return r;
}

}  // namespace

TEST_CASE("stratified samples tile the interval") {
  const auto mid = stratified_samples(0.5, 1.5, 4);
  REQUIRE(mid.t.size() == 4);
  CHECK(mid.t[0] == doctest::Approx(0.625));
  CHECK(mid.t[3] == doctest::Approx(1.375));
  double sum = 0;
  for (double d : mid.delta) sum += d;
  CHECK(sum + mid.t[0] - 0.5 == doctest::Approx(1.0));
  const auto j = stratified_samples(0.0, 1.0, 100, 42);
  for (int i = 0; i < 100; ++i) {
    CHECK(j.t[i] >= i / 100.0);
    CHECK(j.t[i] < (i + 1) / 100.0);
    CHECK(j.delta[i] > 0);
  }
  CHECK(stratified_samples(0.0, 1.0, 100, 42).t == j.t);
  CHECK(j.t.back() + j.delta.back() == doctest::Approx(1.0));
}

TEST_CASE("empty space renders the background") {
  const FieldFunction empty = [](const Vec3&, const Vec3&) { return FieldOutput{Vec3(1, 0, 0), 0.0}; };
  const Vec3 bg(0.2, 0.3, 0.4);
  const auto r = composite_ray(empty, unit_ray(), 64, bg);
  CHECK(r.transmittance == 1.0);
  CHECK((r.color - bg).norm() < 1e-12);
}

TEST_CASE("opaque slab shows its color") {
  const Vec3 slab(0.2, 0.5, 0.7);
  const FieldFunction f = [&](const Vec3& x, const Vec3&) {
    const bool in = x.x() > 0.4 && x.x() < 0.6;
    return FieldOutput{in ? slab : Vec3(1, 1, 1), in ? 1e4 : 0.0};
  };
  const auto r = composite_ray(f, unit_ray(), 256, Vec3::Zero());
  CHECK((r.color - slab).norm() < 1e-6);
  CHECK(r.transmittance < 1e-6);
  CHECK(r.depth == doctest::Approx(0.4).epsilon(0.01));
}

TEST_CASE("constant density transmittance and quadrature convergence") {
  const FieldFunction c2 = [](const Vec3&, const Vec3&) { return FieldOutput{Vec3::Zero(), 2.0}; };
  // deltas run from the first sample to t_far, so the covered depth is 1 - 1/(2n)
  const double t1024 = composite_ray(c2, unit_ray(), 1024, Vec3::Zero()).transmittance;
  CHECK(t1024 == doctest::Approx(std::exp(-2.0 * (1.0 - 0.5 / 1024))).epsilon(1e-12));
  CHECK(std::abs(t1024 - std::exp(-2.0)) < 1e-3);
  // sigma(t) = 4t: optical depth 2, so T = exp(-2); the quadrature error is first order in 1/n
  const FieldFunction ramp = [](const Vec3& x, const Vec3&) { return FieldOutput{Vec3::Zero(), 4.0 * x.x()}; };
  double prev = 1.0;
  for (int n : {4, 16, 64, 256}) {
    const double err = std::abs(composite_ray(ramp, unit_ray(), n, Vec3::Zero()).transmittance - std::exp(-2.0));
    CHECK(err <= prev);
    prev = err;
  }
  CHECK(prev < 1.5e-3);
}

TEST_CASE("weights partition the energy") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 30);
  double sigma[64], delta[64], alpha[64], trans[64], w[64], tf;
  for (int i = 0; i < 64; ++i) {
    sigma[i] = u(rng);
    delta[i] = 1.0 / 64;
  }
  composite_weights(sigma, delta, 64, {}, alpha, trans, w, tf);
  double s = tf;
  for (double x : w) s += x;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("photometric loss values") {
  const Aabb box{Vec3::Constant(-1), Vec3::Constant(2)};
  auto p = FieldParams<double>::initialized(tiny_field(box), 1);
  p.values[p.layout.density[1].bias] = -200.0;  // sigma ~ 0 everywhere
  const Vec3 bg(0.1, 0.1, 0.1);
  TrainingRay r{unit_ray(), bg + Vec3(0.3, 0.4, 0.0), bg};
  LossOptions opt;
  CHECK(photometric_loss<double>(p, {r}, opt, nullptr) == doctest::Approx(0.5).epsilon(1e-9));
  opt.kind = LossKind::SquaredNorm;
  CHECK(photometric_loss<double>(p, {r}, opt, nullptr) == doctest::Approx(0.25).epsilon(1e-9));
  r.target = bg;
  VecX<double> g = VecX<double>::Zero(p.size());
  CHECK(photometric_loss<double>(p, {r}, opt, &g) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(photometric_loss<double>(p, {}, opt, nullptr), InputError);
}

TEST_CASE("loss gradient matches central differences") {
  const Aabb box{Vec3::Zero(), Vec3::Ones()};
  auto p = FieldParams<double>::initialized(tiny_field(box), 7);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = p.layout.hash_offset; i < p.layout.hash_offset + p.layout.hash_size; ++i) p.values[i] = 0.5 * (u(rng) - 0.5);
  std::vector<TrainingRay> rays;
  for (int i = 0; i < 8; ++i) {
    TrainingRay r;
    r.ray.origin = Vec3(u(rng), u(rng), -0.5);
    r.ray.dir = Vec3(u(rng) - 0.5, u(rng) - 0.5, 1.0).normalized();
    r.ray.t_near = 0.5;
    r.ray.t_far = 1.4;
    r.target = Vec3(u(rng), u(rng), u(rng));
    r.background = Vec3(0.5, 0.6, 0.7);
    rays.push_back(r);
  }
  LossOptions opt;
  opt.samples = 24;
  opt.sample_seed = 3;
  VecX<double> g = VecX<double>::Zero(p.size());
  photometric_loss<double>(p, rays, opt, &g);
  int checked[3] = {0, 0, 0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int grp = static_cast<int>(p.layout.group_of(i));
    if (std::abs(g[i]) < 1e-7 || checked[grp] >= 12) continue;
    const double h = 1e-6, keep = p.values[i];
    p.values[i] = keep + h;
    const double lp = photometric_loss<double>(p, rays, opt, nullptr);
    p.values[i] = keep - h;
    const double lm = photometric_loss<double>(p, rays, opt, nullptr);
    p.values[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    CHECK(std::abs(fd - g[i]) / std::max(std::abs(fd), std::abs(g[i])) < 1e-4);
    ++checked[grp];
  }
  CHECK(checked[0] == 12);
  CHECK(checked[1] == 12);
  CHECK(checked[2] == 12);
}

TEST_CASE("camera rays are clipped to the bounds") {
  CameraPose cam;
  cam.intrinsics = Intrinsics::from_fov(8, 8, 0.5);
  cam.world_from_camera = look_at(Vec3(0, -3, 0), Vec3::Zero());
  const Aabb box{Vec3::Constant(-0.5), Vec3::Constant(0.5)};
  const auto r = camera_ray(cam, 4, 4, box);
  REQUIRE(r.has_value());
  CHECK(r->t_near == doctest::Approx(2.5).epsilon(0.02));
  CHECK(r->t_far == doctest::Approx(3.5).epsilon(0.02));
  cam.world_from_camera = look_at(Vec3(0, -3, 0), Vec3(0, -6, 0));
  CHECK_FALSE(camera_ray(cam, 4, 4, box).has_value());
}

TEST_CASE("training on an empty scene empties the field") {
  Scene s;
  s.primitives.push_back(Primitive::half_space(Eigen::Isometry3d::Identity(), Vec3(0.6, 0.5, 0.4)));
  s.bounds = {Vec3(-0.2, -0.2, 0.0), Vec3(0.2, 0.2, 0.15)};
  Dataset d;
  d.backdrop = backdrop_of(s);
  d.cameras = camera_ring(8, 0.5, {0.25}, Vec3(0, 0, 0.05), Intrinsics::from_fov(24, 18, 1.0));
  for (const auto& c : d.cameras) d.images.push_back(render_image(s, c));
  d.held_out.assign(d.cameras.size(), false);
  d.held_out[0] = true;
  TrainConfig tc;
  tc.field = tiny_field({});
  tc.field.grid.levels = 4;
  tc.field.grid.table_size = 1u << 12;
  tc.steps = 200;
  tc.rays_per_batch = 128;
  tc.samples_per_ray = 32;
  tc.log_interval = 100;
  tc.eval_samples = 32;
  tc.seed = 1;
  const auto res = train(d, tc);
  REQUIRE_FALSE(res.log.empty());
  CHECK(res.log.back().loss < res.log.front().loss);
  CHECK(std::isfinite(res.log.back().psnr));
  for (int py = 2; py < 18; py += 5) {
    for (int px = 2; px < 24; px += 5) {
      const auto ray = camera_ray(d.cameras[0], px, py, s.bounds);
      if (!ray) continue;
      CHECK(composite_ray(res.params, *ray, 64, Vec3::Zero()).transmittance > 0.95);
    }
  }
  // same seed, same parameters
  const auto again = train(d, tc);
  CHECK(again.params.values == res.params.values);
}
