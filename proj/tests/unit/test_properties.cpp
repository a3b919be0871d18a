// Randomized invariants, 1000+ cases each.

#include "rgbmpc/control.hpp"
#include "rgbmpc/esdf.hpp"
#include "rgbmpc/eval.hpp"
#include "rgbmpc/render.hpp"

#include <doctest.h>

#include <random>

using namespace rgbmpc;

namespace {

constexpr int kCases = 1000;

Vec3 uniform_in(std::mt19937_64& rng, const Aabb& b) {
  std::uniform_real_distribution<double> u(0, 1);
  return b.lo + b.extent().cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

}  // namespace

TEST_CASE("MPPI weights are a probability vector") {
  std::mt19937_64 rng(1);
  int failures = 0;
  for (int c = 0; c < kCases; ++c) {
    const int K = 1 + static_cast<int>(rng() % 512);
    const double lambda = log_uniform(rng, 1e-4, 1e4);
    const double scale = log_uniform(rng, 1e-3, 1e8);
    std::uniform_real_distribution<double> u(0, scale);
    const VecXd cost = VecXd::NullaryExpr(K, [&] { return u(rng); });
    const VecXd w = mppi_weights(cost, lambda);
    failures += !(std::abs(w.sum() - 1.0) <= 1e-9 && (w.array() >= 0).all() && w.allFinite());
    Eigen::Index best;
    cost.minCoeff(&best);
    failures += w[best] != w.maxCoeff();
  }
  CHECK(failures == 0);

  // and from the controller itself
  const ArmModel m = builtin_arm("arm7");
  MpcConfig cfg;
  cfg.rollouts = 8;
  cfg.horizon = 4;
  MppiController ctl(m, cfg);
  VecXd q(7);
  q << 0.0, -0.3, 0.0, -2.2, 0.0, 1.9, M_PI / 4;
  ArmState s{q, VecXd::Zero(7), 0.0};
  GoalPose g{forward_kinematics(m, q).ee.translation() + Vec3(0.2, 0, 0), Eigen::Quaterniond::Identity()};
  const DistanceQuery wall = [](const Vec3& p) { return 0.3 - p.x(); };
  for (int step = 0; step < 50; ++step) {
    const auto info = ctl.step(s, g, wall, step);
    CHECK(std::abs(info.weights.sum() - 1.0) <= 1e-9);
    s = integrate(m, s, info.control, cfg.dt, cfg.velocity_scale);
  }
}

TEST_CASE("transmittance is monotone and energy is partitioned") {
  std::mt19937_64 rng(2);
  int mono = 0, part = 0;
  std::vector<double> sigma, delta, alpha, trans, w;
  for (int c = 0; c < kCases; ++c) {
    const int n = 1 + static_cast<int>(rng() % 256);
    sigma.resize(n);
    delta.resize(n);
    alpha.resize(n);
    trans.resize(n);
    w.resize(n);
    const double smax = log_uniform(rng, 1e-3, 1e4);
    std::uniform_real_distribution<double> us(0, smax), ud(1e-5, 0.05);
    for (int i = 0; i < n; ++i) {
      sigma[i] = rng() % 4 == 0 ? 0.0 : us(rng);
      delta[i] = ud(rng);
    }
    CompositeOptions opt;
    if (c % 3 == 1) opt = {1e-4, 1e-5};
    double tf = 0;
    const int marched = composite_weights(sigma.data(), delta.data(), n, opt, alpha.data(), trans.data(), w.data(), tf);
    bool ok = trans[0] == 1.0 || marched == 0;
    for (int i = 1; i < marched; ++i) ok &= trans[i] <= trans[i - 1];
    if (marched > 0) ok &= tf <= trans[marched - 1];
    ok &= tf >= 0.0 && tf <= 1.0;
    mono += !ok;
    double sum = tf;
    for (double x : w) sum += x;
    part += std::abs(sum - 1.0) > 1e-9;
  }
  CHECK(mono == 0);
  CHECK(part == 0);
}

TEST_CASE("signed distances are 1-Lipschitz") {
  std::mt19937_64 rng(3);
  int bad = 0;
  for (int c = 0; c < kCases; ++c) {
    const Scene s = generate_scene(c);
    const Aabb b{s.bounds.lo.array() - 0.1, s.bounds.hi.array() + 0.1};
    const Vec3 p = uniform_in(rng, b), q = uniform_in(rng, b);
    bad += std::abs(analytic_sdf(s, p) - analytic_sdf(s, q)) > (p - q).norm() + 1e-12;
    // inside-inclusive density agrees with the sign
    bad += (analytic_density(s, p) > 0) != (analytic_sdf(s, p) <= 0);
  }
  CHECK(bad == 0);

  Scene sph;
  sph.primitives.push_back(Primitive::sphere(Vec3::Zero(), 0.1, Vec3::Ones()));
  const auto g = sample_density_grid([&](const Vec3& x) { return analytic_density(sph, x); },
                                     {Vec3::Constant(-0.13), Vec3::Constant(0.13)}, {27, 27, 27});
  const auto idx = build_index(marching_cubes(g));
  const Aabb box{Vec3::Constant(-0.3), Vec3::Constant(0.3)};
  bad = 0;
  for (int c = 0; c < kCases; ++c) {
    const Vec3 p = uniform_in(rng, box), q = uniform_in(rng, box);
    bad += std::abs(closest_point(idx, p).distance - closest_point(idx, q).distance) > (p - q).norm() + 1e-12;
    bad += std::abs(signed_distance(idx, p) - signed_distance(idx, q)) > (p - q).norm() + 1e-12;
  }
  CHECK(bad == 0);
}

TEST_CASE("accuracy curve is monotone in the threshold") {
  std::mt19937_64 rng(4);
  int bad = 0;
  for (int c = 0; c < kCases; ++c) {
    NearSurfaceSamples s;
    const int n = 1 + static_cast<int>(rng() % 200);
    const double err_scale = log_uniform(rng, 1e-4, 0.1);
    std::uniform_real_distribution<float> ud(0.0f, 0.05f);
    std::exponential_distribution<double> ue(1.0 / err_scale);
    for (int i = 0; i < n; ++i) {
      s.distance.push_back(ud(rng));
      s.error.push_back(static_cast<float>(ue(rng)));
    }
    std::vector<double> th(1 + rng() % 40);
    std::uniform_real_distribution<double> ut(0.0, 6.0);
    for (auto& t : th) t = ut(rng);
    std::sort(th.begin(), th.end());
    const auto acc = accuracy_curve(s, th);
    for (std::size_t i = 1; i < acc.fraction.size(); ++i) bad += acc.fraction[i] < acc.fraction[i - 1];
    for (double f : acc.fraction) bad += f < 0.0 || f > 1.0;
  }
  CHECK(bad == 0);
}

TEST_CASE("reruns are deterministic") {
  std::mt19937_64 rng(5);
  FieldConfig fc;
  fc.grid.levels = 2;
  fc.grid.table_size = 1u << 8;
  fc.grid.bounds = {Vec3::Zero(), Vec3::Ones()};
  fc.density_hidden = 8;
  fc.color_hidden = 8;
  fc.geometry_features = 3;
  const ArmModel arm = builtin_arm("planar3");
  MpcConfig mc;
  mc.rollouts = 4;
  mc.horizon = 3;
  int bad = 0;
  for (int c = 0; c < kCases; ++c) {
    const std::uint64_t seed = rng();
    switch (c % 5) {
      case 0: {
        const auto a = FieldParams<float>::initialized(fc, seed), b = FieldParams<float>::initialized(fc, seed);
        const Vec3 x = uniform_in(rng, fc.grid.bounds);
        const auto oa = field_eval(a, x, Vec3::UnitZ()), ob = field_eval(b, x, Vec3::UnitZ());
        bad += oa.sigma != ob.sigma || oa.color != ob.color;
        break;
      }
      case 1:
        bad += stratified_samples(0.1, 2.0, 32, seed).t != stratified_samples(0.1, 2.0, 32, seed).t;
        break;
      case 2:
        bad += scene_to_json(generate_scene(seed % 5000)) != scene_to_json(generate_scene(seed % 5000));
        break;
      case 3:
        bad += derive_seed(seed, "stage", c) != derive_seed(seed, "stage", c);
        bad += derive_seed(seed, "stage", c) == derive_seed(seed, "stage", c + 1);
        break;
      case 4: {
        mc.seed = seed;
        MppiController x(arm, mc), y(arm, mc);
        const ArmState s{VecXd::Constant(3, 0.2), VecXd::Zero(3), 0.0};
        const GoalPose g{Vec3(0.3, 0.2, 0.1), Eigen::Quaterniond::Identity()};
        const DistanceQuery free = [](const Vec3&) { return 1.0; };
        bad += x.step(s, g, free, c).control != y.step(s, g, free, c).control;
        break;
      }
    }
  }
  CHECK(bad == 0);
}
