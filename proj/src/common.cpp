#include "rgbmpc/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <limits>
#include <thread>
#include <vector>

namespace rgbmpc {

std::optional<std::pair<double, double>> Aabb::intersect_ray(const Vec3& origin, const Vec3& dir) const {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[a];
    double ta = (lo[a] - origin[a]) * inv;
    double tb = (hi[a] - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int n) { g_threads.store(std::max(0, n)); }

int thread_count() {
  const int n = g_threads.load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {
void run_workers(int workers, void (*body)(void*, int), void* ctx) {
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(body, ctx, w);
  body(ctx, 0);
  for (auto& t : pool) t.join();
}
}  // namespace detail

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t counter) {
  return splitmix64(splitmix64(root ^ fnv1a(stream)) + counter * 0x9e3779b97f4a7c15ull);
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace rgbmpc
