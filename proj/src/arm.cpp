#include "rgbmpc/arm.hpp"

#include <fstream>

namespace rgbmpc {

using json = nlohmann::json;

VecXd ArmModel::lower() const {
  VecXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].lower;
  return v;
}
VecXd ArmModel::upper() const {
  VecXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].upper;
  return v;
}
VecXd ArmModel::max_velocity() const {
  VecXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].max_velocity;
  return v;
}
VecXd ArmModel::max_acceleration() const {
  VecXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].max_acceleration;
  return v;
}

void ArmModel::validate() const {
  if (joints.empty()) throw InputError("arm model '" + name + "' has no joints");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    if (!(j.lower < j.upper)) throw InputError("arm joint " + std::to_string(i) + " has lower >= upper limit");
    if (!(j.max_velocity > 0 && j.max_acceleration > 0)) {
      throw InputError("arm joint " + std::to_string(i) + " needs positive velocity/acceleration limits");
    }
  }
  if (ee_link < 0 || ee_link > dof()) throw InputError("arm end-effector link out of range");
  for (std::size_t s = 0; s < spheres.size(); ++s) {
    if (!(spheres[s].radius > 0)) throw InputError("collision sphere " + std::to_string(s) + " has radius <= 0");
    if (spheres[s].link < 0 || spheres[s].link > dof()) throw InputError("collision sphere " + std::to_string(s) + " link out of range");
  }
}

// ---------------------------------------------------------------------------
// json

namespace {

Vec3 vec3_of(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("expected a 3-vector in arm model");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Quaterniond quat_of(const json& j) {
  if (!j.is_array() || j.size() != 4) throw InputError("expected quat_wxyz with 4 entries in arm model");
  Eigen::Quaterniond q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  if (std::abs(q.norm() - 1.0) > 1e-6) throw InputError("arm model quaternion is not unit length");
  return q.normalized();
}

Eigen::Isometry3d pose_of(const json& j) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = quat_of(j.at("quat_wxyz")).toRotationMatrix();
  t.translation() = vec3_of(j.at("t_xyz"));
  return t;
}

json pose_json(const Eigen::Isometry3d& t) {
  const Eigen::Quaterniond q(t.linear());
  return {{"quat_wxyz", {q.w(), q.x(), q.y(), q.z()}}, {"t_xyz", vec3_json(t.translation())}};
}

}  // namespace

ArmModel arm_from_json(const json& j) {
  try {
    ArmModel m;
    m.name = j.value("name", std::string("arm"));
    if (j.value("convention", std::string("modified_dh")) != "modified_dh") {
      throw InputError("arm model convention must be modified_dh");
    }
    m.base = pose_of(j.at("base"));
    for (const auto& jj : j.at("joints")) {
      ArmJoint a;
      a.a = jj.at("a").get<double>();
      a.alpha = jj.at("alpha").get<double>();
      a.d = jj.at("d").get<double>();
      a.theta_offset = jj.value("theta_offset", 0.0);
      a.lower = jj.at("lower").get<double>();
      a.upper = jj.at("upper").get<double>();
      a.max_velocity = jj.at("max_velocity").get<double>();
      a.max_acceleration = jj.at("max_acceleration").get<double>();
      m.joints.push_back(a);
    }
    const auto& ee = j.at("end_effector");
    m.ee_link = ee.at("link").get<int>();
    m.ee_offset = pose_of(ee);
    for (const auto& s : j.at("spheres")) {
      m.spheres.push_back({s.at("link").get<int>(), vec3_of(s.at("center")), s.at("radius").get<double>()});
    }
    if (j.contains("reference")) {
      const auto& r = j.at("reference");
      ArmReference ref;
      const auto q = r.at("q").get<std::vector<double>>();
      ref.q = Eigen::Map<const VecXd>(q.data(), static_cast<Eigen::Index>(q.size()));
      for (const auto& o : r.at("link_origins")) ref.link_origins.push_back(vec3_of(o));
      ref.ee_position = vec3_of(r.at("ee_position"));
      ref.ee_orientation = quat_of(r.at("ee_quat_wxyz"));
      for (const auto& c : r.at("sphere_centers")) ref.sphere_centers.push_back(vec3_of(c));
      m.reference = ref;
    }
    m.validate();
    if (m.reference && (m.reference->q.size() != m.dof() || m.reference->sphere_centers.size() != m.spheres.size() ||
                        static_cast<int>(m.reference->link_origins.size()) != m.dof() + 1)) {
      throw InputError("arm model reference table does not match the model");
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed arm model: ") + e.what());
  }
}

json arm_to_json(const ArmModel& m) {
  json j;
  j["name"] = m.name;
  j["convention"] = "modified_dh";
  j["base"] = pose_json(m.base);
  j["joints"] = json::array();
  for (const auto& a : m.joints) {
    j["joints"].push_back({{"a", a.a}, {"alpha", a.alpha}, {"d", a.d}, {"theta_offset", a.theta_offset},
                           {"lower", a.lower}, {"upper", a.upper}, {"max_velocity", a.max_velocity},
                           {"max_acceleration", a.max_acceleration}});
  }
  j["end_effector"] = pose_json(m.ee_offset);
  j["end_effector"]["link"] = m.ee_link;
  j["spheres"] = json::array();
  for (const auto& s : m.spheres) j["spheres"].push_back({{"link", s.link}, {"center", vec3_json(s.center)}, {"radius", s.radius}});
  if (m.reference) {
    const auto& r = *m.reference;
    json origins = json::array(), centers = json::array();
    for (const auto& o : r.link_origins) origins.push_back(vec3_json(o));
    for (const auto& c : r.sphere_centers) centers.push_back(vec3_json(c));
    j["reference"] = {{"q", std::vector<double>(r.q.data(), r.q.data() + r.q.size())},
                      {"link_origins", origins},
                      {"ee_position", vec3_json(r.ee_position)},
                      {"ee_quat_wxyz", {r.ee_orientation.w(), r.ee_orientation.x(), r.ee_orientation.y(), r.ee_orientation.z()}},
                      {"sphere_centers", centers}};
  }
  return j;
}

ArmModel load_arm_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open arm model " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("arm model " + path.string() + " is not valid JSON: " + e.what());
  }
  return arm_from_json(j);
}

ArmModel builtin_arm(const std::string& name) {
  return load_arm_model(std::filesystem::path(RGBMPC_MODEL_DIR) / (name + ".json"));
}

// ---------------------------------------------------------------------------
// kinematics

namespace {

inline Eigen::Isometry3d joint_transform(const ArmJoint& j, double q) {
  const double ca = std::cos(j.alpha), sa = std::sin(j.alpha);
  const double th = q + j.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  // RotX(alpha) TransX(a) RotZ(theta) TransZ(d)
  Eigen::Isometry3d t;
  t.matrix() << ct, -st, 0, j.a,
                st * ca, ct * ca, -sa, -sa * j.d,
                st * sa, ct * sa, ca, ca * j.d,
                0, 0, 0, 1;
  return t;
}

}  // namespace

FkResult forward_kinematics(const ArmModel& model, const VecXd& q) {
  if (q.size() != model.dof()) throw InputError("joint vector size does not match the arm model");
  if (!q.allFinite()) throw InputError("joint vector is not finite");
  FkResult r;
  r.links.reserve(model.dof() + 1);
  r.links.push_back(model.base);
  for (int i = 0; i < model.dof(); ++i) r.links.push_back(r.links.back() * joint_transform(model.joints[i], q[i]));
  r.sphere_centers.reserve(model.spheres.size());
  for (const auto& s : model.spheres) r.sphere_centers.push_back(r.links[s.link] * s.center);
  r.ee = r.links[model.ee_link] * model.ee_offset;
  return r;
}

void sphere_centers(const ArmModel& model, const double* q, Vec3* centers, Eigen::Isometry3d* ee) {
  Eigen::Isometry3d frames[16];
  const int n = model.dof();
  frames[0] = model.base;
  for (int i = 0; i < n; ++i) frames[i + 1] = frames[i] * joint_transform(model.joints[i], q[i]);
  for (std::size_t s = 0; s < model.spheres.size(); ++s) centers[s] = frames[model.spheres[s].link] * model.spheres[s].center;
  if (ee) *ee = frames[model.ee_link] * model.ee_offset;
}

std::optional<VecXd> inverse_kinematics(const ArmModel& model, const Eigen::Isometry3d& target, const VecXd& seed,
                                        const IkOptions& opt) {
  const int n = model.dof();
  if (seed.size() != n) throw InputError("IK seed size does not match the arm model");
  const VecXd lo = model.lower(), hi = model.upper();
  VecXd q = seed.cwiseMax(lo).cwiseMin(hi);
  auto residual = [&](const VecXd& qq) {
    const Eigen::Isometry3d ee = forward_kinematics(model, qq).ee;
    Eigen::Matrix<double, 6, 1> r;
    r.head<3>() = target.translation() - ee.translation();
    const Eigen::AngleAxisd err(target.linear() * ee.linear().transpose());
    r.tail<3>() = opt.orientation_weight * err.angle() * err.axis();
    return r;
  };
  Eigen::Matrix<double, 6, 1> r = residual(q);
  for (int it = 0; it < opt.iterations && r.norm() > opt.tolerance; ++it) {
    Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
    const double eps = 1e-6;
    for (int k = 0; k < n; ++k) {
      VecXd qp = q;
      qp[k] += eps;
      jac.col(k) = (r - residual(qp)) / eps;
    }
    const Eigen::MatrixXd jjt = jac * jac.transpose() + opt.damping * opt.damping * Eigen::MatrixXd::Identity(6, 6);
    const VecXd step = jac.transpose() * jjt.ldlt().solve(r);
    double scale = 1.0;
    for (int ls = 0; ls < 8; ++ls, scale *= 0.5) {
      const VecXd cand = (q + scale * step).cwiseMax(lo).cwiseMin(hi);
      const auto rc = residual(cand);
      if (rc.norm() < r.norm()) {
        q = cand;
        r = rc;
        break;
      }
    }
  }
  const Eigen::Isometry3d ee = forward_kinematics(model, q).ee;
  const double pos_err = (ee.translation() - target.translation()).norm();
  const double ang_err = Eigen::AngleAxisd(target.linear() * ee.linear().transpose()).angle();
  if (pos_err > 1e-3 || ang_err > 1e-2) return std::nullopt;
  return q;
}

}  // namespace rgbmpc
