#include "rgbmpc/render.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace rgbmpc {

void Ray::validate() const {
  if (!(t_near >= 0 && t_near < t_far)) throw InputError("ray needs 0 <= t_near < t_far");
  if (std::abs(dir.norm() - 1.0) > 1e-6) throw InputError("ray direction must be unit length");
}

std::optional<Ray> camera_ray(const CameraPose& cam, int px, int py, const Aabb& bounds) {
  const Vec3 o = cam.origin();
  const Vec3 d = cam.pixel_direction(px, py);
  const auto range = bounds.intersect_ray(o, d);
  if (!range) return std::nullopt;
  return Ray{o, d, range->first, range->second};
}

namespace {
inline double counter_uniform(std::uint64_t seed, std::uint64_t i) {
  return static_cast<double>(splitmix64(seed + i * 0x9e3779b97f4a7c15ull) >> 11) * 0x1.0p-53;
}

inline std::uint64_t ray_seed(std::uint64_t base, std::size_t ray) { return splitmix64(base ^ (0xd1b54a32d192ed03ull * (ray + 1))); }
}  // namespace

RaySampleSet stratified_samples(double t_near, double t_far, int n, std::optional<std::uint64_t> seed) {
  if (n < 1) throw InputError("need at least one sample per ray");
  RaySampleSet s;
  s.t.resize(n);
  s.delta.resize(n);
  const double w = (t_far - t_near) / n;
  for (int i = 0; i < n; ++i) {
    const double u = seed ? counter_uniform(*seed, static_cast<std::uint64_t>(i)) : 0.5;
    s.t[i] = t_near + (i + u) * w;
  }
  for (int i = 0; i < n; ++i) s.delta[i] = (i + 1 < n ? s.t[i + 1] : t_far) - s.t[i];
  return s;
}

RenderResult composite_ray(const FieldFunction& field, const Ray& ray, int n, const Vec3& background,
                           std::optional<std::uint64_t> seed, const CompositeOptions& opt) {
  ray.validate();
  const RaySampleSet s = stratified_samples(ray.t_near, ray.t_far, n, seed);
  std::vector<double> sigma(n), alpha(n), trans(n), weight(n);
  std::vector<Vec3> color(n);
  for (int i = 0; i < n; ++i) {
    const FieldOutput f = field(ray.origin + s.t[i] * ray.dir, ray.dir);
    sigma[i] = f.sigma;
    color[i] = f.color;
  }
  RenderResult r;
  const int m = composite_weights(sigma.data(), s.delta.data(), n, opt, alpha.data(), trans.data(), weight.data(),
                                  r.transmittance);
  double wsum = 0;
  for (int i = 0; i < m; ++i) {
    r.color += weight[i] * color[i];
    r.depth += weight[i] * s.t[i];
    wsum += weight[i];
  }
  r.color += r.transmittance * background;
  r.depth /= std::max(wsum, 1e-12);
  return r;
}

// ---------------------------------------------------------------------------
// batched ray work shared by rendering and the loss

namespace {

constexpr std::size_t kRayChunk = 64;

template <typename Scalar>
struct ChunkState {
  int n = 0;
  Mat3X<Scalar> pts;
  std::vector<Scalar> t, delta, alpha, trans, weight, colors;
  std::vector<int> marched;
  std::vector<Scalar> t_final;
  std::vector<int> active;  // sample indices with nonzero alpha
  DensityTrace<Scalar> dt;
  ColorTrace<Scalar> ct;
  MatX<Scalar> color_out;  // 3 x active
};

/// Forward pass for rays[b, e): densities, weights, and colors of the active samples.
template <typename Scalar, typename GetRay>
void forward_chunk(const FieldParams<Scalar>& field, GetRay&& get_ray, std::size_t b, std::size_t e, int n,
                   std::optional<std::uint64_t> seed, const CompositeOptions& opt, bool keep_corners,
                   ChunkState<Scalar>& st) {
  const std::size_t nr = e - b;
  const std::size_t ns = nr * n;
  st.n = n;
  st.pts.resize(3, static_cast<Eigen::Index>(ns));
  st.t.resize(ns);
  st.delta.resize(ns);
  for (std::size_t r = 0; r < nr; ++r) {
    const Ray& ray = get_ray(b + r);
    const std::optional<std::uint64_t> rs = seed ? std::optional<std::uint64_t>(ray_seed(*seed, b + r)) : std::nullopt;
    const RaySampleSet s = stratified_samples(ray.t_near, ray.t_far, n, rs);
    for (int i = 0; i < n; ++i) {
      const std::size_t k = r * n + i;
      st.t[k] = Scalar(s.t[i]);
      st.delta[k] = Scalar(s.delta[i]);
      st.pts.col(static_cast<Eigen::Index>(k)) = (ray.origin + s.t[i] * ray.dir).template cast<Scalar>();
    }
  }
  density_forward<Scalar>(field, st.pts, st.dt, keep_corners);
  const VecX<Scalar> sigma = sigma_of(st.dt);

  st.alpha.resize(ns);
  st.trans.resize(ns);
  st.weight.resize(ns);
  st.marched.resize(nr);
  st.t_final.resize(nr);
  st.active.clear();
  for (std::size_t r = 0; r < nr; ++r) {
    const std::size_t o = r * n;
    st.marched[r] = composite_weights(sigma.data() + o, st.delta.data() + o, n, opt, st.alpha.data() + o,
                                      st.trans.data() + o, st.weight.data() + o, st.t_final[r]);
    for (int i = 0; i < st.marched[r]; ++i) {
      if (st.alpha[o + i] > Scalar(0)) st.active.push_back(static_cast<int>(o + i));
    }
  }

  const int g = field.config.geometry_features;
  const Eigen::Index na = static_cast<Eigen::Index>(st.active.size());
  MatX<Scalar> geo(g, na), dir(FieldConfig::kDirDim, na);
  for (Eigen::Index j = 0; j < na; ++j) {
    const int k = st.active[j];
    geo.col(j) = st.dt.output.col(k).tail(g);
    const Vec3& d = get_ray(b + k / n).dir;
    sh_encode(Scalar(d.x()), Scalar(d.y()), Scalar(d.z()), dir.col(j));
  }
  st.colors.assign(3 * ns, Scalar(0));
  if (na > 0) {
    st.color_out = color_forward<Scalar>(field, geo, dir, st.ct);
    for (Eigen::Index j = 0; j < na; ++j) {
      for (int c = 0; c < 3; ++c) st.colors[3 * st.active[j] + c] = st.color_out(c, j);
    }
  } else {
    st.color_out.resize(3, 0);
  }
}

template <typename Scalar>
Vec3 chunk_color(const ChunkState<Scalar>& st, std::size_t r, const Vec3& bg, double* depth) {
  const std::size_t o = r * st.n;
  Vec3 c = Vec3::Zero();
  double d = 0, ws = 0;
  for (int i = 0; i < st.marched[r]; ++i) {
    const double w = static_cast<double>(st.weight[o + i]);
    for (int k = 0; k < 3; ++k) c[k] += w * static_cast<double>(st.colors[3 * (o + i) + k]);
    d += w * static_cast<double>(st.t[o + i]);
    ws += w;
  }
  c += static_cast<double>(st.t_final[r]) * bg;
  if (depth) *depth = d / std::max(ws, 1e-12);
  return c;
}

template <typename Scalar>
std::vector<RenderResult> render_rays(const FieldParams<Scalar>& field, const std::vector<Ray>& rays,
                                      const std::vector<Vec3>& backgrounds, int n, std::optional<std::uint64_t> seed,
                                      const CompositeOptions& opt) {
  std::vector<RenderResult> out(rays.size());
  const std::size_t chunks = (rays.size() + kRayChunk - 1) / kRayChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t b = c * kRayChunk, e = std::min(rays.size(), b + kRayChunk);
    ChunkState<Scalar> st;
    forward_chunk(field, [&](std::size_t i) -> const Ray& { return rays[i]; }, b, e, n, seed, opt, false, st);
    for (std::size_t r = 0; r < e - b; ++r) {
      RenderResult& res = out[b + r];
      res.color = chunk_color(st, r, backgrounds[b + r], &res.depth);
      res.transmittance = static_cast<double>(st.t_final[r]);
    }
  });
  return out;
}

template <typename Scalar>
double loss_chunk(const FieldParams<Scalar>& field, const std::vector<TrainingRay>& rays, std::size_t b,
                  std::size_t e, const LossOptions& opt, Scalar* grad) {
  ChunkState<Scalar> st;
  const int n = opt.samples;
  forward_chunk(field, [&](std::size_t i) -> const Ray& { return rays[i].ray; }, b, e, n,
                std::optional<std::uint64_t>(opt.sample_seed), opt.composite, grad != nullptr, st);
  const std::size_t nr = e - b, ns = nr * n;
  std::vector<Scalar> d_sigma(ns, Scalar(0)), d_color(3 * ns, Scalar(0));
  double total = 0;
  for (std::size_t r = 0; r < nr; ++r) {
    const TrainingRay& tr = rays[b + r];
    const Vec3 c = chunk_color(st, r, tr.background, nullptr);
    const Vec3 diff = c - tr.target;
    const double norm = diff.norm();
    Vec3 g;
    if (opt.kind == LossKind::Norm) {
      total += norm;
      g = norm > 1e-12 ? Vec3(diff / norm) : Vec3::Zero();
    } else {
      total += norm * norm;
      g = 2.0 * diff;
    }
    if (!grad) continue;
    const std::size_t o = r * n;
    const Scalar bg[3] = {Scalar(tr.background.x()), Scalar(tr.background.y()), Scalar(tr.background.z())};
    const Scalar gs[3] = {Scalar(g.x()), Scalar(g.y()), Scalar(g.z())};
    composite_backward(st.delta.data() + o, st.alpha.data() + o, st.trans.data() + o, st.weight.data() + o,
                       st.colors.data() + 3 * o, st.marched[r], st.t_final[r], bg, gs, d_sigma.data() + o,
                       d_color.data() + 3 * o);
  }
  if (!grad || st.active.empty()) return total;

  const Eigen::Index na = static_cast<Eigen::Index>(st.active.size());
  MatX<Scalar> dc(3, na);
  VecX<Scalar> ds(na);
  for (Eigen::Index j = 0; j < na; ++j) {
    const int k = st.active[j];
    for (int c = 0; c < 3; ++c) dc(c, j) = d_color[3 * k + c];
    ds[j] = d_sigma[k];
  }
  const MatX<Scalar> d_geo = color_backward(field, grad, st.ct, dc);
  const DensityTrace<Scalar> active_trace = st.dt.gather(st.active);
  density_backward(field, grad, active_trace, ds, &d_geo);
  return total;
}

}  // namespace

template <typename Scalar>
RenderResult composite_ray(const FieldParams<Scalar>& field, const Ray& ray, int n, const Vec3& background,
                           std::optional<std::uint64_t> seed, const CompositeOptions& opt) {
  ray.validate();
  field.check_finite();
  return render_rays(field, {ray}, {background}, n, seed, opt).front();
}

template <typename Scalar>
double photometric_loss(const FieldParams<Scalar>& field, const std::vector<TrainingRay>& rays,
                        const LossOptions& opt, VecX<Scalar>* grad) {
  if (rays.empty()) throw InputError("photometric_loss needs a nonempty batch");
  const std::size_t chunks = (rays.size() + kRayChunk - 1) / kRayChunk;
  const int workers = static_cast<int>(std::min<std::size_t>(thread_count(), chunks));
  std::vector<double> partial(std::max(workers, 1), 0.0);
  std::vector<VecX<Scalar>> local(grad && workers > 1 ? workers - 1 : 0);
  parallel_chunks(chunks, [&](int w, std::size_t cb, std::size_t ce) {
    Scalar* g = nullptr;
    if (grad) {
      if (w == 0) {
        g = grad->data();
      } else {
        local[w - 1] = VecX<Scalar>::Zero(field.size());
        g = local[w - 1].data();
      }
    }
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t b = c * kRayChunk, e = std::min(rays.size(), b + kRayChunk);
      partial[w] += loss_chunk(field, rays, b, e, opt, g);
    }
  });
  for (auto& l : local) *grad += l;
  double total = 0;
  for (double p : partial) total += p;
  return total;
}

template <typename Scalar>
Image render_view(const FieldParams<Scalar>& field, const CameraPose& camera, const Scene& backdrop, int samples,
                  const CompositeOptions& opt) {
  camera.validate();
  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  Image img(w, h);
  std::vector<Ray> rays;
  std::vector<Vec3> bgs;
  std::vector<std::size_t> where;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (auto r = camera_ray(camera, x, y, backdrop.bounds)) {
        rays.push_back(*r);
        bgs.push_back(backdrop_radiance(backdrop, r->origin + r->t_far * r->dir, r->dir));
        where.push_back(std::size_t(y) * w + x);
      } else {
        img.at(x, y) = backdrop_radiance(backdrop, camera.origin(), camera.pixel_direction(x, y)).cast<float>();
      }
    }
  }
  const auto res = render_rays(field, rays, bgs, samples, std::nullopt, opt);
  for (std::size_t i = 0; i < res.size(); ++i) img.pixels[where[i]] = res[i].color.template cast<float>();
  return img;
}

double holdout_psnr(const FieldParams<float>& field, const Dataset& data, int samples) {
  double acc = 0;
  int count = 0;
  for (std::size_t i = 0; i < data.cameras.size(); ++i) {
    if (i >= data.held_out.size() || !data.held_out[i]) continue;
    const Image img = render_view(field, data.cameras[i], data.backdrop, samples);
    acc += psnr(img, data.images[i]);
    ++count;
  }
  return count ? acc / count : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// training

void TrainConfig::validate() const {
  if (rays_per_batch < 1 || steps < 1 || samples_per_ray < 1 || eval_samples < 1) {
    throw InputError("training counts must be >= 1");
  }
  if (!(lr_hash > 0 && lr_network > 0)) throw InputError("learning rates must be positive");
  if (log_interval < 1) throw InputError("log interval must be >= 1");
}

namespace {
double cosine_lr(double lr0, double ratio, int step, int steps) {
  const double lo = lr0 * ratio;
  return lo + 0.5 * (lr0 - lo) * (1.0 + std::cos(M_PI * step / std::max(1, steps)));
}
}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const TrainCallback& on_log) {
  config.validate();
  if (data.cameras.size() != data.images.size()) throw InputError("dataset camera/image count mismatch");
  std::size_t n_train = 0;
  for (std::size_t i = 0; i < data.cameras.size(); ++i) n_train += (i < data.held_out.size() && data.held_out[i]) ? 0 : 1;
  if (n_train < 2) throw InputError("training needs at least two training views");

  const auto t_start = std::chrono::steady_clock::now();
  const Aabb& bounds = data.backdrop.bounds;
  std::vector<TrainingRay> pool;
  for (std::size_t v = 0; v < data.cameras.size(); ++v) {
    if (v < data.held_out.size() && data.held_out[v]) continue;
    const CameraPose& cam = data.cameras[v];
    const Image& img = data.images[v];
    if (img.width != cam.intrinsics.width || img.height != cam.intrinsics.height) {
      throw InputError("image " + std::to_string(v) + " does not match its intrinsics");
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        auto r = camera_ray(cam, x, y, bounds);
        if (!r) continue;
        pool.push_back({*r, img.at(x, y).cast<double>(),
                        backdrop_radiance(data.backdrop, r->origin + r->t_far * r->dir, r->dir)});
      }
    }
  }
  if (pool.empty()) throw InputError("no training ray intersects the workspace bounds");

  FieldConfig fc = config.field;
  fc.grid.bounds = bounds;
  TrainResult result;
  result.params = FieldParams<float>::initialized(fc, derive_seed(config.seed, "field"));
  FieldParams<float>& p = result.params;
  const std::size_t np = p.size();
  VecX<float> grad(np), m = VecX<float>::Zero(np), v = VecX<float>::Zero(np);
  const auto [hash_b, hash_e] = p.layout.group_range(ParamGroup::HashGrid);

  LossOptions lo;
  lo.kind = config.loss;
  lo.samples = config.samples_per_ray;
  lo.composite = config.composite;

  std::mt19937_64 rng(derive_seed(config.seed, "batches"));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<TrainingRay> batch(config.rays_per_batch);
  const float b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  const float eps = static_cast<float>(config.epsilon);

  for (int step = 1; step <= config.steps; ++step) {
    std::size_t first = 0;
    for (int i = 0; i < config.rays_per_batch; ++i) {
      const std::size_t idx = pick(rng);
      if (i == 0) first = idx;
      batch[i] = pool[idx];
    }
    lo.sample_seed = derive_seed(config.seed, "jitter", static_cast<std::uint64_t>(step));
    grad.setZero();
    const double loss = photometric_loss(p, batch, lo, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite training loss at step " << step << " (batch of " << config.rays_per_batch
          << " rays starting at pool index " << first << ", loss " << loss << ")";
      throw NumericError(msg.str());
    }
    const float lr_h = static_cast<float>(cosine_lr(config.lr_hash, config.final_lr_ratio, step - 1, config.steps));
    const float lr_n = static_cast<float>(cosine_lr(config.lr_network, config.final_lr_ratio, step - 1, config.steps));
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(step));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(step));
    float* pv = p.values.data();
    for (std::size_t i = 0; i < np; ++i) {
      const float g = grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      const float lr = (i >= hash_b && i < hash_e) ? lr_h : lr_n;
      pv[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }

    if (step % config.log_interval == 0 || step == config.steps) {
      TrainLogEntry entry;
      entry.step = step;
      entry.loss = loss / config.rays_per_batch;
      entry.psnr = holdout_psnr(p, data, config.eval_samples);
      entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
      result.log.push_back(entry);
      if (on_log) on_log(entry);
    }
  }
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "step,loss,psnr,wall_ms\n";
  out << std::setprecision(8);
  for (const auto& e : log) out << e.step << ',' << e.loss << ',' << e.psnr << ',' << e.wall_ms << '\n';
}

template RenderResult composite_ray<float>(const FieldParams<float>&, const Ray&, int, const Vec3&,
                                           std::optional<std::uint64_t>, const CompositeOptions&);
template RenderResult composite_ray<double>(const FieldParams<double>&, const Ray&, int, const Vec3&,
                                            std::optional<std::uint64_t>, const CompositeOptions&);
template double photometric_loss<float>(const FieldParams<float>&, const std::vector<TrainingRay>&,
                                        const LossOptions&, VecX<float>*);
template double photometric_loss<double>(const FieldParams<double>&, const std::vector<TrainingRay>&,
                                         const LossOptions&, VecX<double>*);
template Image render_view<float>(const FieldParams<float>&, const CameraPose&, const Scene&, int,
                                  const CompositeOptions&);
template Image render_view<double>(const FieldParams<double>&, const CameraPose&, const Scene&, int,
                                   const CompositeOptions&);

}  // namespace rgbmpc
