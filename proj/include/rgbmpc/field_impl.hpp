#pragma once

// Template implementations for field.hpp.

#include <algorithm>
#include <array>
#include <sstream>

namespace rgbmpc {

namespace field_detail {

template <typename Scalar>
inline Eigen::Map<const MatX<Scalar>> weights(const Scalar* base, const LayerSpec& l) {
  return {base + l.weight, l.out, l.in};
}
template <typename Scalar>
inline Eigen::Map<const VecX<Scalar>> bias(const Scalar* base, const LayerSpec& l) {
  return {base + l.bias, l.out};
}
template <typename Scalar>
inline Eigen::Map<MatX<Scalar>> weights(Scalar* base, const LayerSpec& l) {
  return {base + l.weight, l.out, l.in};
}
template <typename Scalar>
inline Eigen::Map<VecX<Scalar>> bias(Scalar* base, const LayerSpec& l) {
  return {base + l.bias, l.out};
}

template <typename Scalar>
inline void dense(const Scalar* base, const LayerSpec& l, const MatX<Scalar>& in, MatX<Scalar>& out, bool relu) {
  out.noalias() = weights(base, l) * in;
  out.colwise() += bias(base, l);
  if (relu) out = out.cwiseMax(Scalar(0));
}

/// Backward through one dense layer: accumulates parameter gradients, returns d input.
template <typename Scalar>
inline MatX<Scalar> dense_backward(const Scalar* base, Scalar* grad, const LayerSpec& l, const MatX<Scalar>& in,
                                   const MatX<Scalar>& d_out) {
  weights(grad, l).noalias() += d_out * in.transpose();
  bias(grad, l) += d_out.rowwise().sum();
  MatX<Scalar> d_in;
  d_in.noalias() = weights(base, l).transpose() * d_out;
  return d_in;
}

}  // namespace field_detail

template <typename Scalar>
FieldParams<Scalar> FieldParams<Scalar>::initialized(const FieldConfig& cfg, std::uint64_t seed) {
  FieldParams p(cfg);
  std::mt19937_64 rng(derive_seed(seed, "field-init"));
  std::uniform_real_distribution<double> hash_dist(-1e-4, 1e-4);
  for (std::size_t i = 0; i < p.layout.hash_size; ++i) p.values[p.layout.hash_offset + i] = Scalar(hash_dist(rng));
  auto init_layers = [&](const std::vector<LayerSpec>& layers) {
    for (const auto& l : layers) {
      const double bound = std::sqrt(6.0 / l.in);
      std::uniform_real_distribution<double> w(-bound, bound);
      for (std::size_t i = 0; i < std::size_t(l.in) * l.out; ++i) p.values[l.weight + i] = Scalar(w(rng));
    }
  };
  init_layers(p.layout.density);
  init_layers(p.layout.color);
  return p;
}

template <typename Scalar>
void FieldParams<Scalar>::check_finite() const {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(static_cast<double>(values[i]))) {
      std::ostringstream msg;
      msg << "non-finite field parameter at index " << i << " (value " << static_cast<double>(values[i]) << ")";
      throw NumericError(msg.str());
    }
  }
}

template <typename Scalar>
DensityTrace<Scalar> DensityTrace<Scalar>::gather(const std::vector<int>& cols) const {
  DensityTrace out;
  const Eigen::Index n = static_cast<Eigen::Index>(cols.size());
  out.encoding.resize(encoding.rows(), n);
  out.hidden.resize(hidden.rows(), n);
  out.output.resize(output.rows(), n);
  const std::size_t per = samples() > 0 ? corner.size() / samples() : 0;
  out.corner.resize(per * n);
  out.corner_weight.resize(per * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int c = cols[j];
    out.encoding.col(j) = encoding.col(c);
    out.hidden.col(j) = hidden.col(c);
    out.output.col(j) = output.col(c);
    std::copy_n(corner.begin() + per * c, per, out.corner.begin() + per * j);
    std::copy_n(corner_weight.begin() + per * c, per, out.corner_weight.begin() + per * j);
  }
  return out;
}

template <typename Scalar>
void encode_points(const FieldParams<Scalar>& p, const Eigen::Ref<const Mat3X<Scalar>>& x, MatX<Scalar>& out,
                   std::vector<std::uint32_t>* corner, std::vector<Scalar>* corner_weight) {
  const HashGridConfig& g = p.config.grid;
  const int levels = g.levels, nf = g.features;
  const std::uint32_t tsize = g.table_size;
  const Eigen::Index n = x.cols();
  out.resize(levels * nf, n);
  if (corner) {
    corner->resize(std::size_t(n) * levels * 8);
    corner_weight->resize(std::size_t(n) * levels * 8);
  }
  const Scalar* table = p.values.data() + p.layout.hash_offset;
  Scalar lo[3], inv[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = Scalar(g.bounds.lo[a]);
    inv[a] = Scalar(1.0 / (g.bounds.hi[a] - g.bounds.lo[a]));
  }
  std::array<int, 64> res{};
  for (int l = 0; l < levels; ++l) res[l] = g.resolution(l);

  Scalar acc[16];
  for (Eigen::Index s = 0; s < n; ++s) {
    Scalar u[3];
    for (int a = 0; a < 3; ++a) u[a] = std::clamp((x(a, s) - lo[a]) * inv[a], Scalar(0), Scalar(1));
    for (int l = 0; l < levels; ++l) {
      const int nres = res[l];
      std::uint32_t i0[3];
      Scalar f[3];
      for (int a = 0; a < 3; ++a) {
        const Scalar pos = u[a] * Scalar(nres);
        const int cell = std::min(static_cast<int>(pos), nres - 1);
        i0[a] = static_cast<std::uint32_t>(cell);
        f[a] = pos - Scalar(cell);
      }
      for (int k = 0; k < nf; ++k) acc[k] = Scalar(0);
      const std::size_t rec = (std::size_t(s) * levels + l) * 8;
      for (int c = 0; c < 8; ++c) {
        const std::uint32_t cx = i0[0] + (c & 1), cy = i0[1] + ((c >> 1) & 1), cz = i0[2] + ((c >> 2) & 1);
        const Scalar w = ((c & 1) ? f[0] : Scalar(1) - f[0]) * (((c >> 1) & 1) ? f[1] : Scalar(1) - f[1]) *
                         (((c >> 2) & 1) ? f[2] : Scalar(1) - f[2]);
        const std::uint32_t slot = static_cast<std::uint32_t>(l) * tsize + spatial_hash(cx, cy, cz, tsize);
        const Scalar* entry = table + std::size_t(slot) * nf;
        for (int k = 0; k < nf; ++k) acc[k] += w * entry[k];
        if (corner) {
          (*corner)[rec + c] = slot;
          (*corner_weight)[rec + c] = w;
        }
      }
      for (int k = 0; k < nf; ++k) out(l * nf + k, s) = acc[k];
    }
  }
}

template <typename Scalar>
void density_forward(const FieldParams<Scalar>& p, const Eigen::Ref<const Mat3X<Scalar>>& x, DensityTrace<Scalar>& t,
                     bool keep_corners) {
  if (keep_corners) {
    encode_points(p, x, t.encoding, &t.corner, &t.corner_weight);
  } else {
    encode_points<Scalar>(p, x, t.encoding);
  }
  const Scalar* base = p.values.data();
  field_detail::dense(base, p.layout.density[0], t.encoding, t.hidden, true);
  field_detail::dense(base, p.layout.density[1], t.hidden, t.output, false);
}

template <typename Scalar>
MatX<Scalar> color_forward(const FieldParams<Scalar>& p, const Eigen::Ref<const MatX<Scalar>>& geometry,
                           const Eigen::Ref<const MatX<Scalar>>& dir_encoding, ColorTrace<Scalar>& t) {
  const auto& layers = p.layout.color;
  const Scalar* base = p.values.data();
  t.acts.resize(layers.size());
  t.acts[0].resize(geometry.rows() + dir_encoding.rows(), geometry.cols());
  t.acts[0].topRows(geometry.rows()) = geometry;
  t.acts[0].bottomRows(dir_encoding.rows()) = dir_encoding;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) field_detail::dense(base, layers[i], t.acts[i], t.acts[i + 1], true);
  field_detail::dense(base, layers.back(), t.acts.back(), t.raw, false);
  return t.raw.unaryExpr([](Scalar v) { return logistic(v); });
}

template <typename Scalar>
MatX<Scalar> color_backward(const FieldParams<Scalar>& p, Scalar* grad, const ColorTrace<Scalar>& t,
                            const MatX<Scalar>& d_color) {
  const auto& layers = p.layout.color;
  const Scalar* base = p.values.data();
  MatX<Scalar> d = t.raw.unaryExpr([](Scalar v) {
    const Scalar s = logistic(v);
    return s * (Scalar(1) - s);
  });
  d.array() *= d_color.array();
  for (std::size_t i = layers.size(); i-- > 0;) {
    MatX<Scalar> d_in = field_detail::dense_backward(base, grad, layers[i], t.acts[i], d);
    if (i > 0) d_in.array() *= (t.acts[i].array() > Scalar(0)).template cast<Scalar>();
    d.swap(d_in);
  }
  return d.topRows(p.config.geometry_features);
}

template <typename Scalar>
void density_backward(const FieldParams<Scalar>& p, Scalar* grad, const DensityTrace<Scalar>& t,
                      const VecX<Scalar>& d_sigma, const MatX<Scalar>* d_geometry) {
  const Scalar* base = p.values.data();
  const Eigen::Index n = t.samples();
  MatX<Scalar> d_out(t.output.rows(), n);
  for (Eigen::Index s = 0; s < n; ++s) d_out(0, s) = d_sigma[s] * density_activation_grad(t.output(0, s));
  if (d_geometry) {
    d_out.bottomRows(d_out.rows() - 1) = *d_geometry;
  } else {
    d_out.bottomRows(d_out.rows() - 1).setZero();
  }
  MatX<Scalar> d_hidden = field_detail::dense_backward(base, grad, p.layout.density[1], t.hidden, d_out);
  d_hidden.array() *= (t.hidden.array() > Scalar(0)).template cast<Scalar>();
  const MatX<Scalar> d_enc = field_detail::dense_backward(base, grad, p.layout.density[0], t.encoding, d_hidden);

  const int levels = p.config.grid.levels, nf = p.config.grid.features;
  Scalar* table_grad = grad + p.layout.hash_offset;
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int l = 0; l < levels; ++l) {
      const std::size_t rec = (std::size_t(s) * levels + l) * 8;
      for (int c = 0; c < 8; ++c) {
        const Scalar w = t.corner_weight[rec + c];
        Scalar* entry = table_grad + std::size_t(t.corner[rec + c]) * nf;
        for (int k = 0; k < nf; ++k) entry[k] += w * d_enc(l * nf + k, s);
      }
    }
  }
}

// ---------------------------------------------------------------------------

template <typename Scalar>
VecX<Scalar> encode(const FieldParams<Scalar>& p, const Vec3& x) {
  Mat3X<Scalar> pts(3, 1);
  pts.col(0) = x.cast<Scalar>();
  MatX<Scalar> out;
  encode_points<Scalar>(p, pts, out);
  return out.col(0);
}

namespace field_detail {

template <typename Scalar>
void eval_chunk(const FieldParams<Scalar>& p, const Vec3* xs, const Vec3* ds, std::size_t n, FieldOutput* out) {
  Mat3X<Scalar> pts(3, n);
  MatX<Scalar> dir(FieldConfig::kDirDim, n);
  for (std::size_t i = 0; i < n; ++i) {
    pts.col(i) = xs[i].cast<Scalar>();
    sh_encode(Scalar(ds[i].x()), Scalar(ds[i].y()), Scalar(ds[i].z()), dir.col(i));
  }
  DensityTrace<Scalar> dt;
  density_forward<Scalar>(p, pts, dt, false);
  ColorTrace<Scalar> ct;
  const int g = p.config.geometry_features;
  const MatX<Scalar> c = color_forward<Scalar>(p, dt.output.bottomRows(g), dir, ct);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].sigma = static_cast<double>(density_activation(dt.output(0, i)));
    out[i].color = c.col(i).template cast<double>();
  }
}

inline void check_direction(const Vec3& d) {
  if (std::abs(d.norm() - 1.0) > 1e-6) throw InputError("field direction must be unit length");
}

constexpr std::size_t kChunk = 1024;

}  // namespace field_detail

template <typename Scalar>
FieldOutput field_eval(const FieldParams<Scalar>& p, const Vec3& x, const Vec3& d) {
  p.check_finite();
  field_detail::check_direction(d);
  FieldOutput out;
  field_detail::eval_chunk(p, &x, &d, 1, &out);
  return out;
}

template <typename Scalar>
std::vector<FieldOutput> field_eval_batch(const FieldParams<Scalar>& p, const std::vector<Vec3>& xs,
                                          const std::vector<Vec3>& ds) {
  if (xs.size() != ds.size()) throw InputError("field_eval_batch: position/direction count mismatch");
  std::vector<FieldOutput> out(xs.size());
  if (xs.empty()) return out;
  p.check_finite();
  for (const auto& d : ds) field_detail::check_direction(d);
  const std::size_t chunks = (xs.size() + field_detail::kChunk - 1) / field_detail::kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t b = c * field_detail::kChunk;
    const std::size_t n = std::min(field_detail::kChunk, xs.size() - b);
    field_detail::eval_chunk(p, xs.data() + b, ds.data() + b, n, out.data() + b);
  });
  return out;
}

template <typename Scalar>
std::vector<double> density_batch(const FieldParams<Scalar>& p, const std::vector<Vec3>& xs) {
  std::vector<double> out(xs.size());
  if (xs.empty()) return out;
  p.check_finite();
  const std::size_t chunks = (xs.size() + field_detail::kChunk - 1) / field_detail::kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t b = c * field_detail::kChunk;
    const std::size_t n = std::min(field_detail::kChunk, xs.size() - b);
    Mat3X<Scalar> pts(3, n);
    for (std::size_t i = 0; i < n; ++i) pts.col(i) = xs[b + i].cast<Scalar>();
    DensityTrace<Scalar> dt;
    density_forward<Scalar>(p, pts, dt, false);
    for (std::size_t i = 0; i < n; ++i) out[b + i] = static_cast<double>(density_activation(dt.output(0, i)));
  });
  return out;
}

}  // namespace rgbmpc
