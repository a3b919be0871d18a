#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace rgbmpc {

using Vec3 = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Dims3 = std::array<int, 3>;

/// Malformed or inconsistent input (bad file, failed validation). Maps to CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or a diverging computation. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in meters.
struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
  double volume() const {
    const Vec3 e = extent();
    return e.x() > 0 && e.y() > 0 && e.z() > 0 ? e.prod() : 0.0;
  }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
  bool intersects(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
  bool operator==(const Aabb& o) const { return lo == o.lo && hi == o.hi; }

  /// Parametric range [t0, t1] of the ray inside the box, clipped to t >= 0.
  std::optional<std::pair<double, double>> intersect_ray(const Vec3& origin, const Vec3& dir) const;
};

/// Grid node position under the cell-vertex convention (nodes on both faces).
inline Vec3 grid_point(const Aabb& bounds, const Dims3& dims, int i, int j, int k) {
  const Vec3 e = bounds.extent();
  return {bounds.lo.x() + e.x() * i / (dims[0] - 1),
          bounds.lo.y() + e.y() * j / (dims[1] - 1),
          bounds.lo.z() + e.z() * k / (dims[2] - 1)};
}

inline Vec3 grid_spacing(const Aabb& bounds, const Dims3& dims) {
  const Vec3 e = bounds.extent();
  return {e.x() / (dims[0] - 1), e.y() / (dims[1] - 1), e.z() / (dims[2] - 1)};
}

inline std::size_t grid_count(const Dims3& dims) {
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
}

// ---------------------------------------------------------------------------
// threading

/// Caps the worker count used by parallel_for. 0 restores the hardware default.
void set_thread_count(int n);
int thread_count();

namespace detail {
void run_workers(int workers, void (*body)(void*, int), void* ctx);
}

/// Splits [0, n) into one contiguous chunk per worker and calls fn(worker, begin, end).
/// The partition depends only on n and the worker count.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  const int workers = static_cast<int>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    fn(0, std::size_t{0}, n);
    return;
  }
  struct Ctx {
    Fn* fn;
    std::size_t n;
    int workers;
  } ctx{&fn, n, workers};
  detail::run_workers(
      workers,
      [](void* p, int w) {
        auto* c = static_cast<Ctx*>(p);
        const std::size_t b = c->n * w / c->workers;
        const std::size_t e = c->n * (w + 1) / c->workers;
        (*c->fn)(w, b, e);
      },
      &ctx);
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  parallel_chunks(n, [&](int, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

// ---------------------------------------------------------------------------
// seeding and hashing

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream seed for a named stage and counter, derived from one root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t counter = 0);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull);
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

std::string hex64(std::uint64_t v);

}  // namespace rgbmpc
