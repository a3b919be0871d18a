#include "rgbmpc/field.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

using namespace rgbmpc;

namespace {

FieldConfig small_config(int levels = 4, std::uint32_t table = 1u << 10) {
  FieldConfig c;
  c.grid.levels = levels;
  c.grid.table_size = table;
  c.grid.bounds = {Vec3::Zero(), Vec3::Ones()};
  c.density_hidden = 16;
  c.geometry_features = 7;
  c.color_hidden = 16;
  return c;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 d(n(rng), n(rng), n(rng));
  return d.normalized();
}

}  // namespace

TEST_CASE("grid corner returns the hashed table entry") {
  FieldConfig c = small_config(1);
  auto p = FieldParams<double>::initialized(c, 3);
  const int res = c.grid.resolution(0);
  REQUIRE(res == 16);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint32_t i = rng() % 17, j = rng() % 17, k = rng() % 17;
    const Vec3 x(double(i) / res, double(j) / res, double(k) / res);
    const auto e = encode(p, x);
    const std::size_t slot = spatial_hash(i, j, k, c.grid.table_size);
    const double* entry = p.values.data() + p.layout.hash_offset + slot * c.grid.features;
    for (int f = 0; f < c.grid.features; ++f) CHECK(e[f] == entry[f]);
  }
}

TEST_CASE("zero tables encode to zero") {
  FieldConfig c = small_config();
  FieldParams<double> p(c);
  const auto e = encode(p, Vec3(0.3, 0.7, 0.1));
  CHECK(e.size() == c.grid.output_dim());
  CHECK(e.isZero(0.0));
}

TEST_CASE("encoding is linear along an axis inside one cell") {
  FieldConfig c = small_config(1);
  auto p = FieldParams<double>::initialized(c, 11);
  p.values.segment(p.layout.hash_offset, p.layout.hash_size).setRandom();
  const Vec3 x0(0.26, 0.52, 0.77), x1(0.30, 0.52, 0.77);  // both in cell 4 along x at res 16
  const auto e0 = encode(p, x0), e1 = encode(p, x1);
  for (double t : {0.1, 0.25, 0.5, 0.9}) {
    const auto e = encode(p, Vec3((1 - t) * x0 + t * x1));
    CHECK((e - ((1 - t) * e0 + t * e1)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("points outside the domain are clamped") {
  auto p = FieldParams<double>::initialized(small_config(), 2);
  CHECK(encode(p, Vec3(-1, 0.5, 2)) == encode(p, Vec3(0, 0.5, 1)));
}

TEST_CASE("density does not depend on view direction") {
  auto p = FieldParams<double>::initialized(small_config(), 5);
  std::mt19937_64 rng(1);
  const Vec3 x(0.4, 0.6, 0.2);
  const double s0 = field_eval(p, x, Vec3::UnitZ()).sigma;
  bool color_varies = false;
  const Vec3 c0 = field_eval(p, x, Vec3::UnitZ()).color;
  for (int i = 0; i < 100; ++i) {
    const auto o = field_eval(p, x, random_unit(rng));
    CHECK(o.sigma == s0);
    color_varies |= (o.color - c0).norm() > 1e-9;
  }
  CHECK(color_varies);
}

TEST_CASE("evaluation is bitwise deterministic") {
  const auto a = FieldParams<float>::initialized(small_config(), 77);
  const auto b = FieldParams<float>::initialized(small_config(), 77);
  REQUIRE(a.values.size() == b.values.size());
  CHECK(std::memcmp(a.values.data(), b.values.data(), sizeof(float) * a.values.size()) == 0);
  const auto o1 = field_eval(a, Vec3(0.1, 0.2, 0.3), Vec3::UnitX());
  const auto o2 = field_eval(b, Vec3(0.1, 0.2, 0.3), Vec3::UnitX());
  CHECK(o1.sigma == o2.sigma);
  CHECK(o1.color == o2.color);
  CHECK_FALSE(FieldParams<float>::initialized(small_config(), 78).values == a.values);
}

TEST_CASE("batch evaluation matches point evaluation") {
  auto p = FieldParams<float>::initialized(small_config(), 4);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  SUBCASE("single point is exact") {
    const Vec3 x(0.2, 0.9, 0.4), d = random_unit(rng);
    const auto b = field_eval_batch(p, {x}, {d});
    const auto s = field_eval(p, x, d);
    REQUIRE(b.size() == 1);
    CHECK(b[0].sigma == s.sigma);
    CHECK(b[0].color == s.color);
  }
  SUBCASE("4096 points") {
    std::vector<Vec3> xs, ds;
    for (int i = 0; i < 4096; ++i) {
      xs.emplace_back(u(rng), u(rng), u(rng));
      ds.push_back(random_unit(rng));
    }
    const auto b = field_eval_batch(p, xs, ds);
    const auto dens = density_batch(p, xs);
    REQUIRE(b.size() == 4096);
    for (int i = 0; i < 4096; ++i) {
      const auto s = field_eval(p, xs[i], ds[i]);
      CHECK(std::abs(b[i].sigma - s.sigma) <= 1e-6 * std::max(1.0, s.sigma));
      CHECK((b[i].color - s.color).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(dens[i] - s.sigma) <= 1e-6 * std::max(1.0, s.sigma));
    }
  }
  SUBCASE("empty batch") {
    CHECK(field_eval_batch(p, {}, {}).empty());
    CHECK(density_batch(p, {}).empty());
  }
}

TEST_CASE("output ranges") {
  auto p = FieldParams<double>::initialized(small_config(), 8);
  // push the raw density far past the clamp
  const auto& out = p.layout.density[1];
  p.values[out.bias] = 100.0;
  const auto big = field_eval(p, Vec3(0.5, 0.5, 0.5), Vec3::UnitY());
  CHECK(big.sigma == doctest::Approx(1e4));
  p.values[out.bias] = -100.0;
  const auto small = field_eval(p, Vec3(0.5, 0.5, 0.5), Vec3::UnitY());
  CHECK(small.sigma > 0.0);
  CHECK(small.sigma < 1e-30);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  auto q = FieldParams<double>::initialized(small_config(), 9);
  q.values *= 50.0;
  for (int i = 0; i < 200; ++i) {
    const auto r = field_eval(q, Vec3(u(rng), u(rng), u(rng)), random_unit(rng));
    CHECK(r.sigma > 0.0);
    CHECK(r.sigma <= 1e4 * (1 + 1e-12));
    CHECK((r.color.array() >= 0.0).all());
    CHECK((r.color.array() <= 1.0).all());
  }
}

TEST_CASE("invalid inputs are rejected") {
  auto p = FieldParams<double>::initialized(small_config(), 1);
  CHECK_THROWS_AS(field_eval(p, Vec3(0.5, 0.5, 0.5), Vec3(1, 1, 0)), InputError);
  p.values[p.layout.density[0].weight + 3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(p.check_finite(), NumericError);
  CHECK_THROWS_AS(field_eval(p, Vec3(0.5, 0.5, 0.5), Vec3::UnitZ()), NumericError);
  FieldConfig bad = small_config();
  bad.grid.table_size = 1000;  // not a power of two
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("parameter layout groups") {
  const FieldConfig c = small_config();
  const auto l = ParamLayout::from(c);
  CHECK(l.hash_size == std::size_t(c.grid.levels) * c.grid.table_size * c.grid.features);
  CHECK(l.group_of(0) == ParamGroup::HashGrid);
  CHECK(l.group_of(l.density[0].weight) == ParamGroup::DensityHead);
  CHECK(l.group_of(l.color[0].weight) == ParamGroup::ColorHead);
  CHECK(l.group_of(l.total - 1) == ParamGroup::ColorHead);
  CHECK(l.density[1].out == 1 + c.geometry_features);
  CHECK(l.color[0].in == c.geometry_features + FieldConfig::kDirDim);
}

TEST_CASE("checkpoint round-trip is byte exact") {
  FieldConfig c = small_config();
  c.grid.bounds = {Vec3(-0.4, -0.3, 0.0), Vec3(0.4, 0.3, 0.25)};
  const auto p = FieldParams<float>::initialized(c, 12);
  const auto path = std::filesystem::temp_directory_path() / "rgbmpc_test_field.ckpt";
  save_checkpoint(path, p);
  const auto q = load_checkpoint(path);
  CHECK(checkpoint_bytes(q) == checkpoint_bytes(p));
  CHECK(q.config.grid.bounds == c.grid.bounds);
  CHECK(q.values == p.values);
  auto bytes = checkpoint_bytes(p);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes), InputError);
  auto magic = checkpoint_bytes(p);
  magic[0] = 'X';
  CHECK_THROWS_AS(checkpoint_from_bytes(magic), InputError);
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), InputError);
}
