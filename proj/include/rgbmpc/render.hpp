#pragma once

#include "rgbmpc/field.hpp"
#include "rgbmpc/scene.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace rgbmpc {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;

  void validate() const;
};

/// Ray through a pixel center clipped to the bounds; nullopt when it misses them.
std::optional<Ray> camera_ray(const CameraPose& cam, int px, int py, const Aabb& bounds);

/// Sample times t_i (ascending) and interval lengths delta_i = t_{i+1} - t_i with t_n = t_far.
struct RaySampleSet {
  std::vector<double> t;
  std::vector<double> delta;
};

/// Stratified sampling: one sample per equal-width interval, jittered by a counter-based
/// uniform stream when seed is given, at the interval midpoints otherwise.
RaySampleSet stratified_samples(double t_near, double t_far, int n, std::optional<std::uint64_t> seed = std::nullopt);

struct RenderResult {
  Vec3 color = Vec3::Zero();
  double transmittance = 1.0;  // T_final
  double depth = 0.0;
};

/// Quadrature knobs shared by rendering and training.
struct CompositeOptions {
  /// Stop marching once transmittance falls below this (0 disables).
  double termination = 0.0;
  /// Samples with alpha below this are treated as empty (0 disables).
  double min_alpha = 0.0;
};

/// Front-to-back alpha weights for one ray. Returns the number of samples marched; samples at
/// or beyond it carry no weight. trans[i] is the transmittance before sample i.
template <typename Scalar>
int composite_weights(const Scalar* sigma, const Scalar* delta, int n, const CompositeOptions& opt, Scalar* alpha,
                      Scalar* trans, Scalar* weight, Scalar& t_final) {
  Scalar t = Scalar(1);
  int i = 0;
  for (; i < n; ++i) {
    if (opt.termination > 0 && t < Scalar(opt.termination)) break;
    Scalar a = Scalar(1) - std::exp(-sigma[i] * delta[i]);
    if (a < Scalar(opt.min_alpha)) a = Scalar(0);
    alpha[i] = a;
    trans[i] = t;
    weight[i] = t * a;
    t *= Scalar(1) - a;
  }
  for (int j = i; j < n; ++j) alpha[j] = trans[j] = weight[j] = Scalar(0);
  t_final = t;
  return i;
}

/// Reverse pass through composite_weights for color = sum w_i c_i + T_final * bg.
/// colors/d_color are 3-vectors laid out contiguously per sample.
template <typename Scalar>
void composite_backward(const Scalar* delta, const Scalar* alpha, const Scalar* trans, const Scalar* weight,
                        const Scalar* colors, int marched, Scalar t_final, const Scalar* background,
                        const Scalar* d_out, Scalar* d_sigma, Scalar* d_color) {
  Scalar suffix[3] = {t_final * background[0], t_final * background[1], t_final * background[2]};
  for (int i = marched - 1; i >= 0; --i) {
    const Scalar* c = colors + 3 * i;
    if (alpha[i] == Scalar(0)) {
      d_sigma[i] = Scalar(0);
      d_color[3 * i] = d_color[3 * i + 1] = d_color[3 * i + 2] = Scalar(0);
      continue;
    }
    const Scalar t_next = trans[i] * (Scalar(1) - alpha[i]);
    Scalar ds = 0;
    for (int k = 0; k < 3; ++k) {
      ds += (t_next * c[k] - suffix[k]) * d_out[k];
      d_color[3 * i + k] = weight[i] * d_out[k];
      suffix[k] += weight[i] * c[k];
    }
    d_sigma[i] = delta[i] * ds;
  }
}

/// Any callable (x, d) -> FieldOutput.
using FieldFunction = std::function<FieldOutput(const Vec3&, const Vec3&)>;

RenderResult composite_ray(const FieldFunction& field, const Ray& ray, int n, const Vec3& background,
                           std::optional<std::uint64_t> seed = std::nullopt, const CompositeOptions& opt = {});

/// Batched compositing with a trained field (density head everywhere, color head only where marched).
template <typename Scalar>
RenderResult composite_ray(const FieldParams<Scalar>& field, const Ray& ray, int n, const Vec3& background,
                           std::optional<std::uint64_t> seed = std::nullopt, const CompositeOptions& opt = {});

// ---------------------------------------------------------------------------
// photometric loss

enum class LossKind {
  Norm,         // sum over rays of ||target - rendered||_2
  SquaredNorm,  // sum over rays of ||target - rendered||_2^2
};

struct TrainingRay {
  Ray ray;
  Vec3 target = Vec3::Zero();
  Vec3 background = Vec3::Zero();
};

struct LossOptions {
  LossKind kind = LossKind::Norm;
  int samples = 64;
  /// Seed of the stratified jitter; each ray draws from its own counter range.
  std::uint64_t sample_seed = 0;
  CompositeOptions composite;
};

/// Loss over a batch and, when grad is non-null, its gradient added into *grad.
template <typename Scalar>
double photometric_loss(const FieldParams<Scalar>& field, const std::vector<TrainingRay>& rays,
                        const LossOptions& opt, VecX<Scalar>* grad);

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  int rays_per_batch = 1024;
  int steps = 1500;
  int samples_per_ray = 64;
  double lr_hash = 1e-2;
  double lr_network = 1e-3;
  /// Cosine decay ends at lr * final_lr_ratio.
  double final_lr_ratio = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
  LossKind loss = LossKind::Norm;
  CompositeOptions composite{1e-4, 1e-5};
  std::uint64_t seed = 0;
  int log_interval = 250;
  int eval_samples = 128;
  FieldConfig field;

  void validate() const;
};

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;  // mean per-ray loss of the batch
  double psnr = 0.0;  // held-out views, NaN when none
  double wall_ms = 0.0;
};

struct TrainResult {
  FieldParams<float> params;
  std::vector<TrainLogEntry> log;
};

using TrainCallback = std::function<void(const TrainLogEntry&)>;

/// Per-scene optimization of the field on the dataset's training views. Views flagged held-out
/// are only used for the logged PSNR. The hash-grid domain is the backdrop's bounds.
TrainResult train(const Dataset& data, const TrainConfig& config, const TrainCallback& on_log = {});

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log);

/// Novel view of the trained field composited onto the backdrop.
template <typename Scalar>
Image render_view(const FieldParams<Scalar>& field, const CameraPose& camera, const Scene& backdrop, int samples,
                  const CompositeOptions& opt = {1e-4, 1e-5});

/// Mean PSNR over the held-out views of a dataset (NaN if none).
double holdout_psnr(const FieldParams<float>& field, const Dataset& data, int samples);

}  // namespace rgbmpc
