#include "rgbmpc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace rgbmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double box_sdf(const Vec3& p, const Vec3& h) {
  const Vec3 q = p.cwiseAbs() - h;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double cylinder_sdf(const Vec3& p, double r, double half_h) {
  const Eigen::Vector2d d(p.head<2>().norm() - r, std::abs(p.z()) - half_h);
  return std::min(d.maxCoeff(), 0.0) + d.cwiseMax(0.0).norm();
}
}  // namespace

const char* to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Cylinder: return "cylinder";
    case PrimitiveKind::HalfSpace: return "half_space";
  }
  return "?";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "box") return PrimitiveKind::Box;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  if (s == "half_space" || s == "half-space" || s == "plane") return PrimitiveKind::HalfSpace;
  throw InputError("unknown primitive kind '" + s + "'");
}

double Primitive::sdf(const Vec3& p) const {
  if (kind == PrimitiveKind::Sphere) return (p - pose.translation()).norm() - size.x();
  const Vec3 local = pose.inverse(Eigen::Isometry) * p;
  switch (kind) {
    case PrimitiveKind::Box: return box_sdf(local, size);
    case PrimitiveKind::Cylinder: return cylinder_sdf(local, size.x(), 0.5 * size.y());
    case PrimitiveKind::HalfSpace: return local.z();
    default: return kInf;
  }
}

std::optional<Aabb> Primitive::bounding_box() const {
  Vec3 half;
  switch (kind) {
    case PrimitiveKind::Sphere: {
      const Vec3 c = pose.translation();
      return Aabb{c.array() - size.x(), c.array() + size.x()};
    }
    case PrimitiveKind::Box: half = size; break;
    case PrimitiveKind::Cylinder: half = Vec3(size.x(), size.x(), 0.5 * size.y()); break;
    case PrimitiveKind::HalfSpace: return std::nullopt;
  }
  const Eigen::Matrix3d absr = pose.linear().cwiseAbs();
  const Vec3 e = absr * half;
  const Vec3 c = pose.translation();
  return Aabb{c - e, c + e};
}

Primitive Primitive::sphere(const Vec3& center, double radius, const Vec3& albedo) {
  Primitive p;
  p.kind = PrimitiveKind::Sphere;
  p.pose = Eigen::Isometry3d::Identity();
  p.pose.translation() = center;
  p.size = Vec3(radius, 0, 0);
  p.albedo = albedo;
  return p;
}

Primitive Primitive::box(const Eigen::Isometry3d& pose, const Vec3& half_extents, const Vec3& albedo) {
  return Primitive{PrimitiveKind::Box, pose, half_extents, albedo};
}

Primitive Primitive::cylinder(const Eigen::Isometry3d& pose, double radius, double height, const Vec3& albedo) {
  return Primitive{PrimitiveKind::Cylinder, pose, Vec3(radius, height, 0), albedo};
}

Primitive Primitive::half_space(const Eigen::Isometry3d& pose, const Vec3& albedo) {
  return Primitive{PrimitiveKind::HalfSpace, pose, Vec3::Zero(), albedo};
}

void Scene::validate() const {
  if (primitives.empty()) throw InputError("scene has no primitives");
  if (!(bounds.volume() > 0)) throw InputError("scene bounds have non-positive volume");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const Primitive& p = primitives[i];
    const std::string tag = "primitive " + std::to_string(i) + " (" + to_string(p.kind) + ")";
    const Eigen::Matrix3d r = p.pose.linear();
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(r.determinant() - 1.0) > 1e-6) {
      throw InputError(tag + ": rotation is not a proper orthonormal matrix");
    }
    const int nsize = p.kind == PrimitiveKind::Sphere ? 1 : p.kind == PrimitiveKind::Box ? 3
                      : p.kind == PrimitiveKind::Cylinder ? 2 : 0;
    for (int k = 0; k < nsize; ++k) {
      if (!(p.size[k] > 0)) throw InputError(tag + ": size parameters must be positive");
    }
    if ((p.albedo.array() < 0).any() || (p.albedo.array() > 1).any()) {
      throw InputError(tag + ": albedo outside [0,1]");
    }
    if (auto box = p.bounding_box()) {
      if (!box->intersects(bounds)) throw InputError(tag + ": does not intersect the workspace bounds");
    } else {
      // half-space: some corner of the bounds must lie inside it
      bool any = false;
      for (int c = 0; c < 8; ++c) {
        const Vec3 corner((c & 1) ? bounds.hi.x() : bounds.lo.x(), (c & 2) ? bounds.hi.y() : bounds.lo.y(),
                          (c & 4) ? bounds.hi.z() : bounds.lo.z());
        any = any || p.sdf(corner) <= 0;
      }
      if (!any) throw InputError(tag + ": does not intersect the workspace bounds");
    }
  }
}

Intrinsics Intrinsics::from_fov(int width, int height, double fov) {
  Intrinsics in;
  in.width = width;
  in.height = height;
  in.fx = in.fy = 0.5 * width / std::tan(0.5 * fov);
  in.cx = 0.5 * width;
  in.cy = 0.5 * height;
  return in;
}

void CameraPose::validate() const {
  const auto& k = intrinsics;
  if (!(k.fx > 0 && k.fy > 0)) throw InputError("camera focal lengths must be positive");
  if (k.width <= 0 || k.height <= 0) throw InputError("camera image size must be positive");
  if (!(k.cx >= 0 && k.cx < k.width && k.cy >= 0 && k.cy < k.height)) {
    throw InputError("camera principal point outside the image");
  }
}

Vec3 CameraPose::pixel_direction(int px, int py) const {
  const auto& k = intrinsics;
  const Vec3 d_cam((px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0);
  return (world_from_camera.linear() * d_cam).normalized();
}

double analytic_sdf(const Scene& scene, const Vec3& p) {
  double d = kInf;
  for (const auto& prim : scene.primitives) d = std::min(d, prim.sdf(p));
  return d;
}

double analytic_density(const Scene& scene, const Vec3& p, const DensityOptions& opt) {
  const double d = analytic_sdf(scene, p);
  if (opt.smoothing_band <= 0) return d <= 0 ? opt.sigma_inside : 0.0;
  if (d <= 0) return opt.sigma_inside;
  if (d >= opt.smoothing_band) return 0.0;
  return opt.sigma_inside * (1.0 - d / opt.smoothing_band);
}

// ---------------------------------------------------------------------------
// ray intersection

namespace {

struct LocalHit {
  double t = kInf;
  Vec3 normal = Vec3::UnitZ();
};

LocalHit hit_sphere(const Vec3& o, const Vec3& d, double r, double tmin) {
  const double b = o.dot(d);
  const double c = o.squaredNorm() - r * r;
  const double disc = b * b - c;
  if (disc < 0) return {};
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= tmin) t = -b + s;
  if (t <= tmin) return {};
  return {t, (o + t * d) / r};
}

LocalHit hit_box(const Vec3& o, const Vec3& d, const Vec3& h, double tmin) {
  double t0 = -kInf, t1 = kInf;
  int a0 = 0, a1 = 0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (std::abs(o[a]) > h[a]) return {};
      continue;
    }
    double ta = (-h[a] - o[a]) / d[a];
    double tb = (h[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) { t0 = ta; a0 = a; }
    if (tb < t1) { t1 = tb; a1 = a; }
  }
  if (t0 > t1) return {};
  LocalHit hit;
  int axis;
  if (t0 > tmin) { hit.t = t0; axis = a0; }
  else if (t1 > tmin) { hit.t = t1; axis = a1; }
  else return {};
  const Vec3 p = o + hit.t * d;
  hit.normal = Vec3::Zero();
  hit.normal[axis] = p[axis] > 0 ? 1.0 : -1.0;
  return hit;
}

LocalHit hit_cylinder(const Vec3& o, const Vec3& d, double r, double hh, double tmin) {
  LocalHit best;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 0) {
    const double b = o.x() * d.x() + o.y() * d.y();
    const double c = o.x() * o.x() + o.y() * o.y() - r * r;
    const double disc = b * b - a * c;
    if (disc >= 0) {
      const double s = std::sqrt(disc);
      for (double t : {(-b - s) / a, (-b + s) / a}) {
        if (t > tmin && t < best.t && std::abs(o.z() + t * d.z()) <= hh) {
          const Vec3 p = o + t * d;
          best = {t, Vec3(p.x(), p.y(), 0).normalized()};
        }
      }
    }
  }
  if (d.z() != 0) {
    for (double zc : {-hh, hh}) {
      const double t = (zc - o.z()) / d.z();
      if (t > tmin && t < best.t) {
        const Vec3 p = o + t * d;
        if (p.x() * p.x() + p.y() * p.y() <= r * r) best = {t, Vec3(0, 0, zc > 0 ? 1.0 : -1.0)};
      }
    }
  }
  return best;
}

LocalHit hit_half_space(const Vec3& o, const Vec3& d, double tmin) {
  if (o.z() <= 0) return {std::max(tmin, 0.0), Vec3::UnitZ()};
  if (d.z() >= 0) return {};
  const double t = -o.z() / d.z();
  if (t <= tmin) return {};
  return {t, Vec3::UnitZ()};
}

}  // namespace

std::optional<Hit> intersect(const Scene& scene, const Vec3& origin, const Vec3& dir, double tmin,
                             bool half_spaces_only) {
  Hit best;
  best.t = kInf;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    if (half_spaces_only && p.kind != PrimitiveKind::HalfSpace) continue;
    const Eigen::Matrix3d rt = p.pose.linear().transpose();
    const Vec3 o = rt * (origin - p.pose.translation());
    const Vec3 d = rt * dir;
    LocalHit h;
    switch (p.kind) {
      case PrimitiveKind::Sphere: h = hit_sphere(o, d, p.size.x(), tmin); break;
      case PrimitiveKind::Box: h = hit_box(o, d, p.size, tmin); break;
      case PrimitiveKind::Cylinder: h = hit_cylinder(o, d, p.size.x(), 0.5 * p.size.y(), tmin); break;
      case PrimitiveKind::HalfSpace: h = hit_half_space(o, d, tmin); break;
    }
    if (h.t < best.t) {
      best.t = h.t;
      best.normal = p.pose.linear() * h.normal;
      best.primitive = static_cast<int>(i);
    }
  }
  if (best.primitive < 0) return std::nullopt;
  return best;
}

namespace {
const Vec3 kLight1 = Vec3(0.3, 0.2, 1.0).normalized();
const Vec3 kLight2 = Vec3(-0.5, -0.3, 0.6).normalized();
constexpr double kAmbient = 0.25;
constexpr double kWeight1 = 0.5;
constexpr double kWeight2 = 0.25;
}  // namespace

Vec3 shade(const Vec3& albedo, const Vec3& n) {
  const double s = kAmbient + kWeight1 * std::max(0.0, n.dot(kLight1)) + kWeight2 * std::max(0.0, n.dot(kLight2));
  return albedo * s;
}

Vec3 backdrop_radiance(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  if (auto hit = intersect(scene, origin, dir, 0.0, true)) {
    return shade(scene.primitives[hit->primitive].albedo, hit->normal);
  }
  return scene.background;
}

Image render_image(const Scene& scene, const CameraPose& camera, const RenderOptions& opt) {
  camera.validate();
  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  Image img(w, h);
  const Vec3 o = camera.origin();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
    std::mt19937_64 rng(derive_seed(opt.noise_seed, "pixel-noise", y));
    std::normal_distribution<double> noise(0.0, opt.noise_sigma > 0 ? opt.noise_sigma : 1.0);
    for (int x = 0; x < w; ++x) {
      const Vec3 d = camera.pixel_direction(x, static_cast<int>(y));
      Vec3 c = scene.background;
      if (auto hit = intersect(scene, o, d)) c = shade(scene.primitives[hit->primitive].albedo, hit->normal);
      if (opt.noise_sigma > 0) {
        for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k] + noise(rng), 0.0, 1.0);
      }
      img.at(x, static_cast<int>(y)) = c.cast<float>();
    }
  });
  return img;
}

std::vector<double> render_depth(const Scene& scene, const CameraPose& camera) {
  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  std::vector<double> depth(std::size_t(w) * h, kInf);
  const Vec3 o = camera.origin();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
    for (int x = 0; x < w; ++x) {
      if (auto hit = intersect(scene, o, camera.pixel_direction(x, static_cast<int>(y)))) {
        depth[y * w + x] = hit->t;
      }
    }
  });
  return depth;
}

Eigen::Isometry3d look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-12) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear().col(0) = x;
  t.linear().col(1) = y;
  t.linear().col(2) = z;
  t.translation() = eye;
  return t;
}

std::vector<CameraPose> camera_ring(int n, double radius, const std::vector<double>& heights, const Vec3& lookat,
                                    const Intrinsics& intrinsics, double phase) {
  if (n < 1) throw InputError("camera_ring needs n >= 1");
  if (!(radius > 0)) throw InputError("camera_ring needs radius > 0");
  std::vector<CameraPose> poses;
  poses.reserve(std::size_t(n) * heights.size());
  for (double z : heights) {
    for (int k = 0; k < n; ++k) {
      const double phi = phase + 2.0 * M_PI * k / n;
      const Vec3 eye(lookat.x() + radius * std::cos(phi), lookat.y() + radius * std::sin(phi), z);
      poses.push_back({intrinsics, look_at(eye, lookat)});
    }
  }
  return poses;
}

// ---------------------------------------------------------------------------
// generators

Aabb default_workspace() { return {Vec3(-0.375, -0.30, 0.0), Vec3(0.375, 0.30, 0.225)}; }

namespace {
Primitive table_plane() {
  return Primitive::half_space(Eigen::Isometry3d::Identity(), Vec3(0.55, 0.45, 0.35));
}

Vec3 random_albedo(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.15, 0.95);
  Vec3 c(u(rng), u(rng), u(rng));
  // push toward saturated colors so objects stand out from the table
  const double lo = c.minCoeff();
  return (c.array() - 0.6 * lo + 0.05).min(1.0).matrix();
}
}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneGenOptions& opt) {
  std::mt19937_64 rng(derive_seed(seed, "scene-gen"));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };

  Scene scene;
  scene.bounds = default_workspace();
  scene.primitives.push_back(table_plane());

  const int count = std::uniform_int_distribution<int>(opt.min_primitives, opt.max_primitives)(rng);
  struct Footprint {
    Eigen::Vector2d c;
    double r;
  };
  std::vector<Footprint> placed;
  int attempts = 0;
  while (static_cast<int>(placed.size()) < count && attempts < 10000) {
    ++attempts;
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    Primitive p;
    double footprint = 0;
    const double yaw = uniform(0, M_PI);
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    pose.linear() = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    if (kind == 0) {
      const double r = 0.5 * uniform(opt.min_size, opt.max_size);
      p = Primitive::sphere(Vec3(0, 0, r), r, random_albedo(rng));
      footprint = r;
    } else if (kind == 1) {
      const Vec3 h(0.5 * uniform(opt.min_size, opt.max_size), 0.5 * uniform(opt.min_size, opt.max_size),
                   0.5 * uniform(opt.min_size, opt.max_size));
      pose.translation() = Vec3(0, 0, h.z());
      p = Primitive::box(pose, h, random_albedo(rng));
      footprint = h.head<2>().norm();
    } else {
      const double r = 0.5 * uniform(opt.min_size, opt.max_size);
      const double height = uniform(opt.min_size, opt.max_size);
      pose.translation() = Vec3(0, 0, 0.5 * height);
      p = Primitive::cylinder(pose, r, height, random_albedo(rng));
      footprint = r;
    }
    const double hx = 0.5 * opt.region_x - footprint - 0.01;
    const double hy = 0.5 * opt.region_y - footprint - 0.01;
    if (hx <= 0 || hy <= 0) continue;
    const Eigen::Vector2d c(uniform(-hx, hx), uniform(-hy, hy));
    bool ok = true;
    for (const auto& f : placed) ok = ok && (f.c - c).norm() >= f.r + footprint + opt.min_gap;
    if (!ok) continue;
    p.pose.translation().head<2>() = c;
    placed.push_back({c, footprint});
    scene.primitives.push_back(p);
  }
  return scene;
}

Scene standard_scene(int index) {
  if (index < 0 || index > 2) throw InputError("standard scene index must be 0, 1 or 2");
  return generate_scene(1000 + static_cast<std::uint64_t>(index));
}

Scene three_object_scene() {
  Scene s;
  s.bounds = default_workspace();
  s.primitives.push_back(table_plane());
  s.primitives.push_back(Primitive::sphere(Vec3(-0.15, 0.08, 0.05), 0.05, Vec3(0.85, 0.2, 0.15)));
  Eigen::Isometry3d box = Eigen::Isometry3d::Identity();
  box.linear() = Eigen::AngleAxisd(0.5, Vec3::UnitZ()).toRotationMatrix();
  box.translation() = Vec3(0.12, 0.10, 0.04);
  s.primitives.push_back(Primitive::box(box, Vec3(0.05, 0.035, 0.04), Vec3(0.2, 0.6, 0.85)));
  Eigen::Isometry3d cyl = Eigen::Isometry3d::Identity();
  cyl.translation() = Vec3(0.02, -0.12, 0.05);
  s.primitives.push_back(Primitive::cylinder(cyl, 0.035, 0.10, Vec3(0.25, 0.8, 0.3)));
  return s;
}

Scene backdrop_of(const Scene& scene) {
  Scene b;
  b.bounds = scene.bounds;
  b.background = scene.background;
  for (const auto& p : scene.primitives) {
    if (p.kind == PrimitiveKind::HalfSpace) b.primitives.push_back(p);
  }
  return b;
}

// ---------------------------------------------------------------------------
// serialization

namespace {
using nlohmann::json;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string("expected 3-vector for ") + what);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setw(2) << j << '\n';
}
}  // namespace

json scene_to_json(const Scene& scene) {
  json prims = json::array();
  for (const auto& p : scene.primitives) {
    const Eigen::Quaterniond q(p.pose.linear());
    json params = json::object();
    switch (p.kind) {
      case PrimitiveKind::Sphere: params["radius"] = p.size.x(); break;
      case PrimitiveKind::Box: params["half_extents"] = vec_json(p.size); break;
      case PrimitiveKind::Cylinder:
        params["radius"] = p.size.x();
        params["height"] = p.size.y();
        break;
      case PrimitiveKind::HalfSpace: break;
    }
    prims.push_back({{"kind", to_string(p.kind)},
                     {"pose", {{"quat_wxyz", {q.w(), q.x(), q.y(), q.z()}}, {"t_xyz", vec_json(p.pose.translation())}}},
                     {"params", params},
                     {"albedo", vec_json(p.albedo)}});
  }
  return {{"version", 1},
          {"bounds", {{"min", vec_json(scene.bounds.lo)}, {"max", vec_json(scene.bounds.hi)}}},
          {"background", vec_json(scene.background)},
          {"primitives", prims}};
}

Scene scene_from_json(const json& j) {
  try {
    Scene s;
    s.bounds.lo = json_vec(j.at("bounds").at("min"), "bounds.min");
    s.bounds.hi = json_vec(j.at("bounds").at("max"), "bounds.max");
    if (j.contains("background")) s.background = json_vec(j["background"], "background");
    for (const auto& pj : j.at("primitives")) {
      Primitive p;
      p.kind = primitive_kind_from_string(pj.at("kind").get<std::string>());
      const auto& qj = pj.at("pose").at("quat_wxyz");
      Eigen::Quaterniond q(qj.at(0).get<double>(), qj.at(1).get<double>(), qj.at(2).get<double>(),
                           qj.at(3).get<double>());
      if (std::abs(q.norm() - 1.0) > 1e-6) throw InputError("primitive quaternion is not unit length");
      p.pose = Eigen::Isometry3d::Identity();
      p.pose.linear() = q.normalized().toRotationMatrix();
      p.pose.translation() = json_vec(pj.at("pose").at("t_xyz"), "pose.t_xyz");
      const json params = pj.value("params", json::object());
      switch (p.kind) {
        case PrimitiveKind::Sphere: p.size = Vec3(params.at("radius").get<double>(), 0, 0); break;
        case PrimitiveKind::Box: p.size = json_vec(params.at("half_extents"), "half_extents"); break;
        case PrimitiveKind::Cylinder:
          p.size = Vec3(params.at("radius").get<double>(), params.at("height").get<double>(), 0);
          break;
        case PrimitiveKind::HalfSpace: p.size = Vec3::Zero(); break;
      }
      if (pj.contains("albedo")) p.albedo = json_vec(pj["albedo"], "albedo");
      s.primitives.push_back(p);
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed scene description: ") + e.what());
  }
}

void save_scene(const std::filesystem::path& path, const Scene& scene) { write_json_file(path, scene_to_json(scene)); }

Scene load_scene(const std::filesystem::path& path) {
  Scene s = scene_from_json(read_json_file(path));
  s.validate();
  return s;
}

json camera_to_json(const CameraPose& cam) {
  const auto& k = cam.intrinsics;
  const Eigen::Matrix4d m = cam.world_from_camera.matrix();
  json mat = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) mat.push_back(m(r, c));
  return {{"width", k.width}, {"height", k.height}, {"fx", k.fx}, {"fy", k.fy},
          {"cx", k.cx},       {"cy", k.cy},         {"camera_to_world", mat}};
}

CameraPose camera_from_json(const json& j) {
  try {
    CameraPose cam;
    auto& k = cam.intrinsics;
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    const auto& mat = j.at("camera_to_world");
    if (mat.size() != 16) throw InputError("camera_to_world must have 16 entries");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = mat[4 * r + c].get<double>();
    cam.world_from_camera.matrix() = m;
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed camera entry: ") + e.what());
  }
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  json frames = json::array();
  for (std::size_t i = 0; i < ds.cameras.size(); ++i) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << ".png";
    write_png(dir / name.str(), ds.images[i]);
    json f = camera_to_json(ds.cameras[i]);
    f["image"] = name.str();
    f["split"] = i < ds.held_out.size() && ds.held_out[i] ? "test" : "train";
    frames.push_back(f);
  }
  write_json_file(dir / "poses.json", frames);
  write_json_file(dir / "backdrop.json", scene_to_json(ds.backdrop));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const json frames = read_json_file(dir / "poses.json");
  if (!frames.is_array()) throw InputError("poses.json must be a JSON list: " + (dir / "poses.json").string());
  for (const auto& f : frames) {
    ds.cameras.push_back(camera_from_json(f));
    ds.images.push_back(read_png(dir / f.at("image").get<std::string>()));
    ds.held_out.push_back(f.value("split", std::string("train")) == "test");
    const auto& cam = ds.cameras.back();
    const auto& img = ds.images.back();
    if (img.width != cam.intrinsics.width || img.height != cam.intrinsics.height) {
      throw InputError("image size does not match intrinsics: " + f.at("image").get<std::string>());
    }
  }
  ds.backdrop = scene_from_json(read_json_file(dir / "backdrop.json"));
  return ds;
}

}  // namespace rgbmpc
