#pragma once

// Radiance field f(x, d) -> (c, sigma): multiresolution hash-grid encoder followed by a
// density head (encoding -> hidden -> raw density + geometry features) and a color head
// (geometry features + spherical-harmonics direction encoding -> hidden layers -> rgb).
//
// All parameters live in one flat vector so optimizers, checkpoints and finite-difference
// checks see a single array; the layout object maps it to hash tables and dense layers.
// Everything is templated on the scalar so training runs in float and gradient checks in double.

#include "rgbmpc/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

namespace rgbmpc {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat3X = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

struct HashGridConfig {
  int levels = 8;
  int base_resolution = 16;
  double growth = 1.5;
  int features = 2;
  std::uint32_t table_size = 1u << 16;
  Aabb bounds;

  /// Cells per side at a level: floor(base_resolution * growth^level).
  int resolution(int level) const {
    return static_cast<int>(std::floor(base_resolution * std::pow(growth, level) + 1e-9));
  }
  int output_dim() const { return levels * features; }
  void validate() const;
};

struct FieldConfig {
  HashGridConfig grid;
  int density_hidden = 64;
  int geometry_features = 15;
  int color_hidden = 64;
  int color_layers = 2;

  /// Direction encoding width: real spherical harmonics up to band 3 (degree 4, 16 terms).
  static constexpr int kDirDim = 16;

  void validate() const;
};

enum class ParamGroup { HashGrid, DensityHead, ColorHead };

struct LayerSpec {
  int in = 0;
  int out = 0;
  std::size_t weight = 0;  // offset of the out x in column-major weight block
  std::size_t bias = 0;
};

/// Offsets of every parameter block inside the flat vector.
struct ParamLayout {
  std::size_t hash_offset = 0;
  std::size_t hash_size = 0;
  std::vector<LayerSpec> density;  // hidden, output
  std::vector<LayerSpec> color;    // hidden..., output
  std::size_t total = 0;

  static ParamLayout from(const FieldConfig& config);
  ParamGroup group_of(std::size_t index) const;
  /// [begin, end) of a group in the flat vector.
  std::pair<std::size_t, std::size_t> group_range(ParamGroup g) const;
};

template <typename Scalar>
struct FieldParams {
  FieldConfig config;
  ParamLayout layout;
  VecX<Scalar> values;

  FieldParams() = default;
  explicit FieldParams(const FieldConfig& cfg)
      : config(cfg), layout(ParamLayout::from(cfg)), values(VecX<Scalar>::Zero(layout.total)) {}

  /// Hash features uniform in [-1e-4, 1e-4]; weights fan-in scaled uniform; biases zero.
  static FieldParams initialized(const FieldConfig& cfg, std::uint64_t seed);

  template <typename S2>
  FieldParams<S2> cast() const {
    FieldParams<S2> out;
    out.config = config;
    out.layout = layout;
    out.values = values.template cast<S2>();
    return out;
  }

  std::size_t size() const { return layout.total; }
  /// Throws NumericError naming the first non-finite parameter.
  void check_finite() const;
};

struct FieldOutput {
  Vec3 color = Vec3::Zero();
  double sigma = 0.0;
};

// ---------------------------------------------------------------------------
// activations and encodings

/// Density activation: exp with the raw value clamped so that sigma <= 1e4.
template <typename Scalar>
inline Scalar density_activation(Scalar raw) {
  return std::exp(std::min(raw, Scalar(9.210340371976184)));
}
template <typename Scalar>
inline Scalar density_activation_grad(Scalar raw) {
  return raw < Scalar(9.210340371976184) ? std::exp(raw) : Scalar(0);
}

template <typename Scalar>
inline Scalar logistic(Scalar v) {
  return Scalar(1) / (Scalar(1) + std::exp(-v));
}

/// Real spherical harmonics basis (16 terms) of a unit direction.
template <typename Scalar, typename Out>
inline void sh_encode(Scalar x, Scalar y, Scalar z, Out&& o) {
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  o[0] = Scalar(0.28209479177387814);
  o[1] = Scalar(-0.48860251190291987) * y;
  o[2] = Scalar(0.48860251190291987) * z;
  o[3] = Scalar(-0.48860251190291987) * x;
  o[4] = Scalar(1.0925484305920792) * x * y;
  o[5] = Scalar(-1.0925484305920792) * y * z;
  o[6] = Scalar(0.94617469575755997) * zz - Scalar(0.31539156525251999);
  o[7] = Scalar(-1.0925484305920792) * x * z;
  o[8] = Scalar(0.54627421529603959) * (xx - yy);
  o[9] = Scalar(0.59004358992664352) * y * (-Scalar(3) * xx + yy);
  o[10] = Scalar(2.8906114426405538) * x * y * z;
  o[11] = Scalar(0.45704579946446572) * y * (Scalar(1) - Scalar(5) * zz);
  o[12] = Scalar(0.3731763325901154) * z * (Scalar(5) * zz - Scalar(3));
  o[13] = Scalar(0.45704579946446572) * x * (Scalar(1) - Scalar(5) * zz);
  o[14] = Scalar(1.4453057213202769) * z * (xx - yy);
  o[15] = Scalar(0.59004358992664352) * x * (-xx + Scalar(3) * yy);
}

inline std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z, std::uint32_t table_size) {
  return (x * 1u ^ y * 2654435761u ^ z * 805459861u) & (table_size - 1u);
}

// ---------------------------------------------------------------------------
// batched forward / backward

/// Activations kept from a density pass for the backward pass.
template <typename Scalar>
struct DensityTrace {
  MatX<Scalar> encoding;                      // L*F x S
  std::vector<std::uint32_t> corner;          // S x L x 8 table slots (entry index, level offset included)
  std::vector<Scalar> corner_weight;          // S x L x 8
  MatX<Scalar> hidden;                        // density_hidden x S, post-ReLU
  MatX<Scalar> output;                        // (1 + G) x S, row 0 raw density

  Eigen::Index samples() const { return output.cols(); }
  /// Compact copy restricted to the given sample columns.
  DensityTrace gather(const std::vector<int>& cols) const;
};

template <typename Scalar>
struct ColorTrace {
  std::vector<MatX<Scalar>> acts;  // acts[0] = input, acts[i] = post-ReLU of hidden layer i
  MatX<Scalar> raw;                // 3 x A pre-logistic
};

/// Hash-grid encoding of points (clamped into the domain). Fills corner slots when requested.
template <typename Scalar>
void encode_points(const FieldParams<Scalar>& p, const Eigen::Ref<const Mat3X<Scalar>>& x, MatX<Scalar>& out,
                   std::vector<std::uint32_t>* corner = nullptr, std::vector<Scalar>* corner_weight = nullptr);

template <typename Scalar>
void density_forward(const FieldParams<Scalar>& p, const Eigen::Ref<const Mat3X<Scalar>>& x, DensityTrace<Scalar>& t,
                     bool keep_corners = true);

/// Colors (3 x A, in (0,1)) from geometry features (G x A) and direction encodings (16 x A).
template <typename Scalar>
MatX<Scalar> color_forward(const FieldParams<Scalar>& p, const Eigen::Ref<const MatX<Scalar>>& geometry,
                           const Eigen::Ref<const MatX<Scalar>>& dir_encoding, ColorTrace<Scalar>& t);

/// Accumulates color-head gradients for d loss / d color and returns d loss / d geometry.
template <typename Scalar>
MatX<Scalar> color_backward(const FieldParams<Scalar>& p, Scalar* grad, const ColorTrace<Scalar>& t,
                            const MatX<Scalar>& d_color);

/// Accumulates density-head and hash gradients from d loss / d sigma (S) and d loss / d geometry (G x S).
template <typename Scalar>
void density_backward(const FieldParams<Scalar>& p, Scalar* grad, const DensityTrace<Scalar>& t,
                      const VecX<Scalar>& d_sigma, const MatX<Scalar>* d_geometry);

template <typename Scalar>
VecX<Scalar> sigma_of(const DensityTrace<Scalar>& t) {
  VecX<Scalar> s(t.samples());
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = density_activation(t.output(0, i));
  return s;
}

// ---------------------------------------------------------------------------
// point evaluation API

/// Single-point feature vector (length L*F).
template <typename Scalar>
VecX<Scalar> encode(const FieldParams<Scalar>& p, const Vec3& x);

/// f(x, d). d must be unit length to 1e-6; parameters must be finite.
template <typename Scalar>
FieldOutput field_eval(const FieldParams<Scalar>& p, const Vec3& x, const Vec3& d);

/// Elementwise field_eval over a batch, parallel over fixed-size chunks.
template <typename Scalar>
std::vector<FieldOutput> field_eval_batch(const FieldParams<Scalar>& p, const std::vector<Vec3>& xs,
                                          const std::vector<Vec3>& ds);

/// Density only (the color head is skipped), parallel over chunks.
template <typename Scalar>
std::vector<double> density_batch(const FieldParams<Scalar>& p, const std::vector<Vec3>& xs);

// ---------------------------------------------------------------------------
// checkpoint: "RGBF", u32 version, config block, u64 count, little-endian f32 parameters

void save_checkpoint(const std::filesystem::path& path, const FieldParams<float>& params);
FieldParams<float> load_checkpoint(const std::filesystem::path& path);
std::vector<unsigned char> checkpoint_bytes(const FieldParams<float>& params);
FieldParams<float> checkpoint_from_bytes(const std::vector<unsigned char>& bytes, const std::string& source = "<memory>");

}  // namespace rgbmpc

#include "rgbmpc/field_impl.hpp"
