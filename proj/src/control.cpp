#include "rgbmpc/control.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

namespace rgbmpc {

using json = nlohmann::json;

void MpcConfig::validate() const {
  if (horizon < 1) throw InputError("mpc horizon must be >= 1");
  if (rollouts < 2) throw InputError("mpc rollouts must be >= 2");
  if (!(dt > 0)) throw InputError("mpc dt must be > 0");
  if (!(lambda > 0)) throw InputError("mpc lambda must be > 0");
  if (!(noise_scale > 0) && noise_sigma.size() == 0) throw InputError("mpc noise scale must be > 0");
  if (noise_sigma.size() && !(noise_sigma.array() > 0).all()) throw InputError("mpc noise sigma entries must be > 0");
  if (!(buffer >= 0)) throw InputError("mpc buffer must be >= 0");
  if (!(velocity_scale > 0 && velocity_scale <= 1)) throw InputError("mpc velocity scale must be in (0, 1]");
  if (max_steps < 1) throw InputError("mpc max steps must be >= 1");
  if (!(goal_tolerance > 0)) throw InputError("mpc goal tolerance must be > 0");
}

VecXd MpcConfig::sigma(int dof) const {
  if (noise_sigma.size() == 0) return VecXd::Constant(dof, noise_scale);
  if (noise_sigma.size() != dof) throw InputError("mpc noise sigma size does not match the arm");
  return noise_sigma;
}

double collision_cost(const DistanceQuery& sdf, const Vec3* centers, const std::vector<CollisionSphere>& spheres,
                      double buffer, double w_hinge, double w_penalty) {
  double c = 0.0;
  for (std::size_t s = 0; s < spheres.size(); ++s) {
    const double d = sdf(centers[s]);
    const double m = d - spheres[s].radius - buffer;
    if (m < 0) c += w_hinge * -m;
    if (d < spheres[s].radius) c += w_penalty;
  }
  return c;
}

ArmState integrate(const ArmModel& model, const ArmState& s, const VecXd& u, double dt, double velocity_scale) {
  ArmState r;
  r.q.resize(model.dof());
  r.qd.resize(model.dof());
  r.time = s.time + dt;
  for (int j = 0; j < model.dof(); ++j) {
    const auto& jt = model.joints[j];
    const double a = std::clamp(u[j], -jt.max_acceleration, jt.max_acceleration);
    const double vmax = jt.max_velocity * velocity_scale;
    double v = std::clamp(s.qd[j] + a * dt, -vmax, vmax);
    double q = s.q[j] + v * dt;
    if (q < jt.lower || q > jt.upper) {
      q = std::clamp(q, jt.lower, jt.upper);
      v = 0.0;
    }
    r.q[j] = q;
    r.qd[j] = v;
  }
  return r;
}

namespace {

double orientation_angle(const Eigen::Matrix3d& a, const Eigen::Quaterniond& goal) {
  const Eigen::Quaterniond qa(a);
  const double dot = std::min(1.0, std::abs(qa.dot(goal)));
  return 2.0 * std::acos(dot);
}

// Inline version of rollout_cost that reuses scratch buffers.
CostBreakdown rollout_into(const ArmModel& model, const ArmState& state, const Eigen::MatrixXd& controls,
                           const VecXd& prev_u, const DistanceQuery& sdf, const GoalPose& goal,
                           const MpcConfig& cfg, std::vector<Vec3>& centers, bool* collides) {
  const auto& w = cfg.weights;
  const int n = model.dof(), H = static_cast<int>(controls.rows());
  const VecXd lo = model.lower(), hi = model.upper();
  CostBreakdown c;
  ArmState s = state;
  VecXd u_prev = prev_u;
  if (collides) *collides = false;
  for (int t = 0; t < H; ++t) {
    const VecXd u = controls.row(t).transpose();
    s = integrate(model, s, u, cfg.dt, cfg.velocity_scale);
    Eigen::Isometry3d ee;
    sphere_centers(model, s.q.data(), centers.data(), &ee);
    const double scale = t == H - 1 ? 1.0 + w.terminal : 1.0;
    c.goal += scale * w.goal_position * (ee.translation() - goal.position).norm();
    if (w.goal_orientation > 0) c.orientation += scale * w.goal_orientation * orientation_angle(ee.linear(), goal.orientation);
    const double cc = collision_cost(sdf, centers.data(), model.spheres, cfg.buffer, w.collision_hinge, w.collision_penalty);
    c.collision += cc;
    if (collides && cc > 0) *collides = true;
    for (int j = 0; j < n; ++j) {
      const double a = std::max(0.0, cfg.limit_margin - (s.q[j] - lo[j]));
      const double b = std::max(0.0, cfg.limit_margin - (hi[j] - s.q[j]));
      c.limits += w.joint_limit * (a * a + b * b);
    }
    c.smoothness += w.smoothness * (u - u_prev).squaredNorm();
    u_prev = u;
  }
  c.velocity = w.terminal_velocity * s.qd.norm();
  return c;
}

}  // namespace

CostBreakdown rollout_cost(const ArmModel& model, const ArmState& state, const Eigen::MatrixXd& controls,
                           const VecXd& prev_u, const DistanceQuery& sdf, const GoalPose& goal, const MpcConfig& config) {
  if (controls.cols() != model.dof()) throw InputError("control sequence width does not match the arm");
  std::vector<Vec3> centers(model.spheres.size());
  return rollout_into(model, state, controls, prev_u, sdf, goal, config, centers, nullptr);
}

std::pair<double, double> goal_error(const ArmModel& model, const VecXd& q, const GoalPose& goal) {
  const auto ee = forward_kinematics(model, q).ee;
  return {(ee.translation() - goal.position).norm(), orientation_angle(ee.linear(), goal.orientation)};
}

VecXd mppi_weights(const VecXd& costs, double lambda) {
  if (costs.size() == 0) throw InputError("MPPI weights need at least one rollout");
  if (!(lambda > 0)) throw InputError("MPPI temperature must be > 0");
  // shifted by the minimum so the best rollout has exp(0) = 1 and nothing underflows to all-zero
  VecXd w = (-(costs.array() - costs.minCoeff()) / lambda).exp().matrix();
  return w / w.sum();
}

MppiController::MppiController(const ArmModel& model, const MpcConfig& config) : model_(model), config_(config) {
  config_.validate();
  reset();
}

void MppiController::reset() {
  nominal_ = Eigen::MatrixXd::Zero(config_.horizon, model_.dof());
  prev_u_ = VecXd::Zero(model_.dof());
}

MppiController::StepInfo MppiController::step(const ArmState& state, const GoalPose& goal, const DistanceQuery& sdf,
                                              std::uint64_t step_index) {
  const int K = config_.rollouts, H = config_.horizon, n = model_.dof();
  const VecXd sigma = config_.sigma(n);
  const VecXd amax = model_.max_acceleration();
  std::vector<Eigen::MatrixXd> samples(K);
  VecXd cost(K);
  std::vector<char> collides(K, 0);
  parallel_chunks(static_cast<std::size_t>(K), [&](int, std::size_t b, std::size_t e) {
    std::vector<Vec3> centers(model_.spheres.size());
    for (std::size_t k = b; k < e; ++k) {
      std::mt19937_64 rng(derive_seed(config_.seed, "rollout", step_index * K + k));
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::MatrixXd u = nominal_;
      // rollout 0 keeps the unperturbed nominal sequence
      if (k > 0) {
        for (int t = 0; t < H; ++t)
          for (int j = 0; j < n; ++j) u(t, j) += sigma[j] * normal(rng);
      }
      for (int j = 0; j < n; ++j) u.col(j) = u.col(j).cwiseMax(-amax[j]).cwiseMin(amax[j]);
      bool hit = false;
      cost[k] = rollout_into(model_, state, u, prev_u_, sdf, goal, config_, centers, &hit).total();
      collides[k] = hit;
      samples[k] = std::move(u);
    }
  });
  if (!cost.allFinite()) throw NumericError("non-finite MPPI rollout cost");
  StepInfo info;
  Eigen::Index best = 0;
  info.min_cost = cost.minCoeff(&best);
  info.weights = mppi_weights(cost, config_.lambda);
  Eigen::MatrixXd next = Eigen::MatrixXd::Zero(H, n);
  for (int k = 0; k < K; ++k) next += info.weights[k] * samples[k];
  if (config_.collision_fallback) {
    std::vector<Vec3> centers(model_.spheres.size());
    bool hit = false;
    rollout_into(model_, state, next, prev_u_, sdf, goal, config_, centers, &hit);
    if (hit && !collides[best]) {
      next = samples[best];
      info.fallback = true;
    }
  }
  info.control = next.row(0).transpose();
  // shift left, pad with zero
  nominal_.topRows(H - 1) = next.bottomRows(H - 1);
  nominal_.row(H - 1).setZero();
  prev_u_ = info.control;
  return info;
}

namespace {

double oracle_clearance(const ArmModel& model, const DistanceQuery& oracle, const std::vector<Vec3>& centers) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < centers.size(); ++s) m = std::min(m, oracle(centers[s]) - model.spheres[s].radius);
  return m;
}

}  // namespace

EpisodeResult run_episode(const ArmModel& model, const VecXd& start, const GoalPose& goal, const DistanceQuery& sdf,
                          const DistanceQuery& oracle, const MpcConfig& config) {
  if (start.size() != model.dof()) throw InputError("episode start does not match the arm");
  const auto t0 = std::chrono::steady_clock::now();
  MppiController mpc(model, config);
  EpisodeResult r;
  ArmState s{start, VecXd::Zero(model.dof()), 0.0};
  std::vector<Vec3> centers(model.spheres.size());
  auto record = [&](const ArmState& st) {
    Eigen::Isometry3d ee;
    sphere_centers(model, st.q.data(), centers.data(), &ee);
    r.trajectory.push_back(st);
    r.ee.push_back(ee);
    r.clearance.push_back(oracle_clearance(model, oracle, centers));
    return (ee.translation() - goal.position).norm();
  };
  double err = record(s);
  for (int step = 0; step < config.max_steps && err >= config.goal_tolerance; ++step) {
    const auto info = mpc.step(s, goal, sdf, static_cast<std::uint64_t>(step));
    s = integrate(model, s, info.control, config.dt, config.velocity_scale);
    if (!s.q.allFinite()) throw NumericError("arm state became non-finite");
    err = record(s);
    r.steps = step + 1;
  }
  r.final_error = err;
  r.reached = err < config.goal_tolerance;
  r.min_clearance = *std::min_element(r.clearance.begin(), r.clearance.end());
  r.max_penetration = std::max(0.0, -r.min_clearance);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// episode suites

std::vector<Episode> generate_episode_suite(const ArmModel& model, const DistanceQuery& oracle, std::uint64_t seed,
                                            const SuiteOptions& opt) {
  if (opt.count < 1) throw InputError("episode count must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, "episodes"));
  std::uniform_real_distribution<double> ux(opt.region.lo.x(), opt.region.hi.x());
  std::uniform_real_distribution<double> uy(opt.region.lo.y(), opt.region.hi.y());
  std::uniform_real_distribution<double> uyaw(-M_PI / 4, M_PI / 4);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  VecXd ready(model.dof());
  if (model.dof() == 7) {
    ready << 0.0, -0.3, 0.0, -2.2, 0.0, 1.9, M_PI / 4;
  } else {
    ready.setZero();
  }
  std::vector<Vec3> centers(model.spheres.size());
  // down-pointing tool: tool z along world -z
  const Eigen::Matrix3d down = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();

  auto sample_config = [&](Vec3& pos, Eigen::Quaterniond& rot) -> std::optional<VecXd> {
    pos = Vec3(ux(rng), uy(rng), opt.height);
    const Eigen::Matrix3d r = Eigen::AngleAxisd(uyaw(rng), Vec3::UnitZ()).toRotationMatrix() * down;
    rot = Eigen::Quaterniond(r);
    Eigen::Isometry3d target = Eigen::Isometry3d::Identity();
    target.linear() = r;
    target.translation() = pos;
    for (int attempt = 0; attempt < 8; ++attempt) {
      VecXd seed_q = ready;
      if (attempt > 0)
        for (int j = 0; j < model.dof(); ++j) seed_q[j] += 0.3 * unit(rng);
      const auto q = inverse_kinematics(model, target, seed_q);
      if (!q) continue;
      sphere_centers(model, q->data(), centers.data(), nullptr);
      if (oracle_clearance(model, oracle, centers) >= opt.clearance) return q;
    }
    return std::nullopt;
  };

  std::vector<Episode> out;
  for (int tries = 0; static_cast<int>(out.size()) < opt.count; ++tries) {
    if (tries > 200 * opt.count) throw InputError("could not place enough collision-free episodes in the region");
    Vec3 p0, p1;
    Eigen::Quaterniond r0, r1;
    const auto q0 = sample_config(p0, r0);
    if (!q0) continue;
    const auto q1 = sample_config(p1, r1);
    if (!q1 || (p1 - p0).norm() < opt.min_separation) continue;
    out.push_back({*q0, {p1, r1}});
  }
  return out;
}

json episodes_to_json(const std::vector<Episode>& episodes) {
  json arr = json::array();
  for (const auto& e : episodes) {
    const auto& o = e.goal.orientation;
    arr.push_back({{"start", std::vector<double>(e.start.data(), e.start.data() + e.start.size())},
                   {"goal_position", {e.goal.position.x(), e.goal.position.y(), e.goal.position.z()}},
                   {"goal_quat_wxyz", {o.w(), o.x(), o.y(), o.z()}}});
  }
  return {{"episodes", arr}};
}

std::vector<Episode> episodes_from_json(const json& j, int dof) {
  try {
    std::vector<Episode> out;
    for (const auto& e : j.at("episodes")) {
      const auto s = e.at("start").get<std::vector<double>>();
      const auto p = e.at("goal_position").get<std::vector<double>>();
      const auto q = e.at("goal_quat_wxyz").get<std::vector<double>>();
      if (static_cast<int>(s.size()) != dof || p.size() != 3 || q.size() != 4) {
        throw InputError("episode entry has wrong vector sizes");
      }
      Episode ep;
      ep.start = Eigen::Map<const VecXd>(s.data(), dof);
      ep.goal.position = Vec3(p[0], p[1], p[2]);
      ep.goal.orientation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized();
      out.push_back(ep);
    }
    return out;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed episode suite: ") + e.what());
  }
}

void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(17) << episodes_to_json(episodes).dump(1) << "\n";
}

std::vector<Episode> load_episodes(const std::filesystem::path& path, int dof) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open episode suite " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("episode suite " + path.string() + " is not valid JSON: " + e.what());
  }
  return episodes_from_json(j, dof);
}

void write_trajectory_csv(const std::filesystem::path& path, const EpisodeResult& r) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  const int n = r.trajectory.empty() ? 0 : static_cast<int>(r.trajectory.front().q.size());
  out << "t";
  for (int j = 0; j < n; ++j) out << ",q" << j;
  out << ",ee_x,ee_y,ee_z,ee_qw,ee_qx,ee_qy,ee_qz,clearance\n";
  out << std::setprecision(9);
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    const auto& s = r.trajectory[i];
    out << s.time;
    for (int j = 0; j < n; ++j) out << "," << s.q[j];
    const Vec3 p = r.ee[i].translation();
    const Eigen::Quaterniond q(r.ee[i].linear());
    out << "," << p.x() << "," << p.y() << "," << p.z() << "," << q.w() << "," << q.x() << "," << q.y() << ","
        << q.z() << "," << r.clearance[i] << "\n";
  }
}

}  // namespace rgbmpc
