#include "rgbmpc/esdf.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <numeric>

namespace rgbmpc {

// ---------------------------------------------------------------------------
// primitives

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* closest) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5)
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  Vec3 q;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) {
    q = a;
  } else {
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) {
      q = b;
    } else {
      const double vc = d1 * d4 - d3 * d2;
      if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        q = a + (d1 / (d1 - d3)) * ab;
      } else {
        const Vec3 cp = p - c;
        const double d5 = ab.dot(cp), d6 = ac.dot(cp);
        if (d6 >= 0 && d5 <= d6) {
          q = c;
        } else {
          const double vb = d5 * d2 - d1 * d6;
          if (vb <= 0 && d2 >= 0 && d6 <= 0) {
            q = a + (d2 / (d2 - d6)) * ac;
          } else {
            const double va = d3 * d6 - d5 * d4;
            if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
              q = b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
            } else {
              const double denom = va + vb + vc;
              if (!(std::abs(denom) > 0)) {
                // degenerate triangle: fall back to its edges
                auto seg = [&](const Vec3& s0, const Vec3& s1) {
                  const Vec3 e = s1 - s0;
                  const double l2 = e.squaredNorm();
                  const double t = l2 > 0 ? std::clamp((p - s0).dot(e) / l2, 0.0, 1.0) : 0.0;
                  return Vec3(s0 + t * e);
                };
                const Vec3 q0 = seg(a, b), q1 = seg(b, c), q2 = seg(c, a);
                q = q0;
                if ((p - q1).squaredNorm() < (p - q).squaredNorm()) q = q1;
                if ((p - q2).squaredNorm() < (p - q).squaredNorm()) q = q2;
              } else {
                const double v = vb / denom, w = vc / denom;
                q = a + v * ab + w * ac;
              }
            }
          }
        }
      }
    }
  }
  if (closest) *closest = q;
  return (p - q).norm();
}

double triangle_solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Van Oosterom & Strackee
  const Vec3 ra = a - p, rb = b - p, rc = c - p;
  const double la = ra.norm(), lb = rb.norm(), lc = rc.norm();
  const double num = ra.dot(rb.cross(rc));
  const double den = la * lb * lc + ra.dot(rb) * lc + ra.dot(rc) * lb + rb.dot(rc) * la;
  return 2.0 * std::atan2(num, den);
}

namespace {

double box_distance2(const Aabb& box, const Vec3& p) {
  const Vec3 d = (box.lo - p).cwiseMax(p - box.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

Aabb empty_box() {
  const double inf = std::numeric_limits<double>::infinity();
  return {Vec3::Constant(inf), Vec3::Constant(-inf)};
}

void grow(Aabb& box, const Vec3& p) {
  box.lo = box.lo.cwiseMin(p);
  box.hi = box.hi.cwiseMax(p);
}

void grow(Aabb& box, const Aabb& o) {
  box.lo = box.lo.cwiseMin(o.lo);
  box.hi = box.hi.cwiseMax(o.hi);
}

double half_area(const Aabb& b) {
  const Vec3 e = (b.hi - b.lo).cwiseMax(0.0);
  return e.x() * e.y() + e.y() * e.z() + e.z() * e.x();
}

struct Builder {
  MeshDistanceIndex& idx;
  std::vector<Aabb> tri_box;
  std::vector<Vec3> tri_centroid;

  int build(int first, int count) {
    const int id = static_cast<int>(idx.nodes.size());
    idx.nodes.emplace_back();
    Aabb box = empty_box(), cbox = empty_box();
    for (int i = first; i < first + count; ++i) {
      grow(box, tri_box[idx.order[i]]);
      grow(cbox, tri_centroid[idx.order[i]]);
    }
    idx.nodes[id].box = box;
    idx.nodes[id].first = first;
    idx.nodes[id].count = count;
    if (count <= idx.leaf_size) return id;

    // binned SAH over the widest centroid axis
    int axis = 0;
    const Vec3 ext = cbox.hi - cbox.lo;
    if (ext.y() > ext[axis]) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    int mid = first + count / 2;
    auto* begin = idx.order.data() + first;
    auto* end = begin + count;
    if (ext[axis] > 0) {
      constexpr int kBins = 16;
      Aabb bin_box[kBins];
      int bin_count[kBins] = {};
      for (auto& b : bin_box) b = empty_box();
      auto bin_of = [&](int t) {
        const int k = static_cast<int>(kBins * (tri_centroid[t][axis] - cbox.lo[axis]) / ext[axis]);
        return std::clamp(k, 0, kBins - 1);
      };
      for (auto* it = begin; it != end; ++it) {
        const int k = bin_of(*it);
        ++bin_count[k];
        grow(bin_box[k], tri_box[*it]);
      }
      double best = std::numeric_limits<double>::infinity();
      int best_split = -1;
      for (int s = 1; s < kBins; ++s) {
        Aabb l = empty_box(), r = empty_box();
        int nl = 0, nr = 0;
        for (int k = 0; k < s; ++k) {
          if (bin_count[k]) grow(l, bin_box[k]);
          nl += bin_count[k];
        }
        for (int k = s; k < kBins; ++k) {
          if (bin_count[k]) grow(r, bin_box[k]);
          nr += bin_count[k];
        }
        if (nl == 0 || nr == 0) continue;
        const double cost = nl * half_area(l) + nr * half_area(r);
        if (cost < best) {
          best = cost;
          best_split = s;
        }
      }
      if (best_split > 0) {
        auto* pivot = std::stable_partition(begin, end, [&](int t) { return bin_of(t) < best_split; });
        mid = first + static_cast<int>(pivot - begin);
      }
    }
    if (mid == first || mid == first + count) {
      std::stable_sort(begin, end, [&](int x, int y) {
        return tri_centroid[x][axis] < tri_centroid[y][axis] || (tri_centroid[x][axis] == tri_centroid[y][axis] && x < y);
      });
      mid = first + count / 2;
    }
    const int l = build(first, mid - first);
    const int r = build(mid, first + count - mid);
    idx.nodes[id].left = l;
    idx.nodes[id].right = r;
    idx.nodes[id].count = 0;
    return id;
  }

  // fills far-field data bottom-up; returns total area
  double summarize(int id) {
    BvhNode& n = idx.nodes[id];
    double area = 0;
    Vec3 weighted = Vec3::Zero();
    Vec3 nsum = Vec3::Zero();
    std::vector<int> tris;
    collect(id, tris);
    for (int t : tris) {
      const Vec3 cr = 0.5 * (idx.b[t] - idx.a[t]).cross(idx.c[t] - idx.a[t]);
      const double ar = cr.norm();
      nsum += cr;
      weighted += ar * tri_centroid[t];
      area += ar;
    }
    n.normal_sum = nsum;
    n.centroid = area > 0 ? Vec3(weighted / area) : n.box.center();
    double r = 0;
    for (int t : tris) {
      r = std::max({r, (idx.a[t] - n.centroid).norm(), (idx.b[t] - n.centroid).norm(), (idx.c[t] - n.centroid).norm()});
    }
    n.radius = r;
    if (!n.leaf()) {
      summarize(n.left);
      summarize(idx.nodes[id].right);
    }
    return area;
  }

  void collect(int id, std::vector<int>& out) const {
    const BvhNode& n = idx.nodes[id];
    if (n.leaf()) {
      for (int i = n.first; i < n.first + n.count; ++i) out.push_back(idx.order[i]);
      return;
    }
    collect(n.left, out);
    collect(n.right, out);
  }
};

}  // namespace

MeshDistanceIndex build_index(const TriangleMesh& mesh, int leaf_size) {
  mesh.validate();
  if (mesh.triangles.empty()) throw InputError("cannot build a distance index over an empty mesh");
  if (leaf_size < 1) throw InputError("BVH leaf size must be >= 1");
  MeshDistanceIndex idx;
  idx.leaf_size = leaf_size;
  idx.mesh_hash = mesh_hash(mesh);
  const std::size_t n = mesh.triangles.size();
  idx.a.resize(n);
  idx.b.resize(n);
  idx.c.resize(n);
  Builder b{idx, std::vector<Aabb>(n), std::vector<Vec3>(n)};
  for (std::size_t t = 0; t < n; ++t) {
    idx.a[t] = mesh.vertices[mesh.triangles[t][0]];
    idx.b[t] = mesh.vertices[mesh.triangles[t][1]];
    idx.c[t] = mesh.vertices[mesh.triangles[t][2]];
    Aabb box = empty_box();
    grow(box, idx.a[t]);
    grow(box, idx.b[t]);
    grow(box, idx.c[t]);
    b.tri_box[t] = box;
    b.tri_centroid[t] = (idx.a[t] + idx.b[t] + idx.c[t]) / 3.0;
  }
  idx.order.resize(n);
  std::iota(idx.order.begin(), idx.order.end(), 0);
  idx.nodes.reserve(2 * n / leaf_size + 2);
  b.build(0, static_cast<int>(n));
  b.summarize(0);
  return idx;
}

ClosestHit closest_point(const MeshDistanceIndex& index, const Vec3& p, double upper_bound) {
  ClosestHit best;
  double best2 = upper_bound * upper_bound;
  if (std::isinf(upper_bound)) best2 = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const BvhNode& n = index.nodes[stack[--top]];
    if (box_distance2(n.box, p) >= best2) continue;
    if (n.leaf()) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        const int t = index.order[i];
        Vec3 q;
        const double d = point_triangle_distance(p, index.a[t], index.b[t], index.c[t], &q);
        if (d * d < best2 || (best.triangle < 0 && d * d <= best2)) {
          best2 = d * d;
          best = {d, q, t};
        }
      }
      continue;
    }
    const double dl = box_distance2(index.nodes[n.left].box, p);
    const double dr = box_distance2(index.nodes[n.right].box, p);
    // push the farther child first so the nearer one is visited next
    if (dl < dr) {
      if (dr < best2) stack[top++] = n.right;
      if (dl < best2) stack[top++] = n.left;
    } else {
      if (dl < best2) stack[top++] = n.left;
      if (dr < best2) stack[top++] = n.right;
    }
  }
  return best;
}

double winding_number(const MeshDistanceIndex& index, const Vec3& p, double beta) {
  double omega = 0;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const BvhNode& n = index.nodes[stack[--top]];
    if (beta > 0) {
      const Vec3 r = n.centroid - p;
      const double d = r.norm();
      if (d > beta * n.radius) {
        omega += n.normal_sum.dot(r) / (d * d * d);
        continue;
      }
    }
    if (n.leaf()) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        const int t = index.order[i];
        omega += triangle_solid_angle(p, index.a[t], index.b[t], index.c[t]);
      }
      continue;
    }
    stack[top++] = n.left;
    stack[top++] = n.right;
  }
  return omega / (4.0 * M_PI);
}

double signed_distance(const MeshDistanceIndex& index, const Vec3& p) {
  const double d = closest_point(index, p).distance;
  return winding_number(index, p) > 0.5 ? -d : d;
}

// ---------------------------------------------------------------------------
// baked grid

void SdfGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InputError("SDF grid needs at least 2 nodes per axis");
  }
  if (!(bounds.volume() > 0)) throw InputError("SDF grid bounds have non-positive volume");
  if (values.size() != grid_count(dims)) throw InputError("SDF grid value count does not match dims");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericError("SDF grid value " + std::to_string(i) + " is non-finite");
  }
}

namespace {
SdfGrid empty_sdf(const Aabb& bounds, const Dims3& dims) {
  SdfGrid g;
  g.bounds = bounds;
  g.dims = dims;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InputError("SDF grid needs at least 2 nodes per axis");
  }
  if (!(bounds.volume() > 0)) throw InputError("SDF grid bounds have non-positive volume");
  g.values.assign(grid_count(dims), 0.0f);
  return g;
}
}  // namespace

SdfGrid bake_grid(const MeshDistanceIndex& index, const Aabb& bounds, const Dims3& dims, const BakeOptions& opt) {
  SdfGrid g = empty_sdf(bounds, dims);
  const std::size_t total = g.values.size();
  std::vector<double> dist(total);
  // unsigned distances; each row reuses the previous node's closest triangle as an upper bound
  parallel_for(std::size_t(dims[1]) * dims[2], [&](std::size_t row) {
    const int j = static_cast<int>(row % dims[1]), k = static_cast<int>(row / dims[1]);
    int prev = -1;
    for (int i = 0; i < dims[0]; ++i) {
      const Vec3 p = grid_point(bounds, dims, i, j, k);
      double ub = std::numeric_limits<double>::infinity();
      if (prev >= 0) ub = point_triangle_distance(p, index.a[prev], index.b[prev], index.c[prev]) * (1 + 1e-12) + 1e-15;
      const ClosestHit hit = closest_point(index, p, ub);
      dist[g.index(i, j, k)] = hit.distance;
      prev = hit.triangle;
    }
  });

  std::vector<std::int8_t> sign(total, 0);
  auto winding_sign = [&](std::size_t id) {
    const int i = static_cast<int>(id % dims[0]);
    const int j = static_cast<int>((id / dims[0]) % dims[1]);
    const int k = static_cast<int>(id / (std::size_t(dims[0]) * dims[1]));
    return static_cast<std::int8_t>(winding_number(index, grid_point(bounds, dims, i, j, k)) > 0.5 ? -1 : 1);
  };
  if (!opt.propagate_sign) {
    parallel_for(total, [&](std::size_t id) { sign[id] = winding_sign(id); });
  } else {
    const double hmax = g.spacing().maxCoeff();
    std::vector<std::size_t> near;
    for (std::size_t id = 0; id < total; ++id) {
      if (dist[id] <= hmax) near.push_back(id);
    }
    parallel_for(near.size(), [&](std::size_t n) { sign[near[n]] = winding_sign(near[n]); });
    // a node farther from the surface than the edge length shares its neighbors' sign
    std::deque<std::size_t> queue(near.begin(), near.end());
    auto flood = [&]() {
      while (!queue.empty()) {
        const std::size_t id = queue.front();
        queue.pop_front();
        const int i = static_cast<int>(id % dims[0]);
        const int j = static_cast<int>((id / dims[0]) % dims[1]);
        const int k = static_cast<int>(id / (std::size_t(dims[0]) * dims[1]));
        auto visit = [&](int ii, int jj, int kk) {
          const std::size_t nb = g.index(ii, jj, kk);
          if (sign[nb] == 0 && dist[nb] > hmax) {
            sign[nb] = sign[id];
            queue.push_back(nb);
          }
        };
        if (i > 0) visit(i - 1, j, k);
        if (i + 1 < dims[0]) visit(i + 1, j, k);
        if (j > 0) visit(i, j - 1, k);
        if (j + 1 < dims[1]) visit(i, j + 1, k);
        if (k > 0) visit(i, j, k - 1);
        if (k + 1 < dims[2]) visit(i, j, k + 1);
      }
    };
    flood();
    for (std::size_t id = 0; id < total; ++id) {
      if (sign[id] != 0) continue;
      sign[id] = winding_sign(id);
      queue.push_back(id);
      flood();
    }
  }

  parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const std::size_t id = g.index(i, j, k);
        double v = sign[id] * dist[id];
        if (!opt.support.empty()) {
          const Vec3 p = grid_point(bounds, dims, i, j, k);
          for (const auto& s : opt.support) v = std::min(v, s.sdf(p));
        }
        g.values[id] = static_cast<float>(v);
      }
    }
  });
  g.provenance = "mesh:" + hex64(index.mesh_hash) + " leaf:" + std::to_string(index.leaf_size) +
                 " support:" + std::to_string(opt.support.size());
  return g;
}

SdfGrid bake_function(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds, const Dims3& dims) {
  SdfGrid g = empty_sdf(bounds, dims);
  parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) g.values[g.index(i, j, k)] = static_cast<float>(sdf(grid_point(bounds, dims, i, j, k)));
    }
  });
  g.provenance = "function";
  return g;
}

double query(const SdfGrid& grid, const Vec3& p) {
  const Vec3 q = grid.bounds.clamp(p);
  const double outside = (p - q).norm();
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (q[a] - grid.bounds.lo[a]) / (grid.bounds.hi[a] - grid.bounds.lo[a]) * (grid.dims[a] - 1);
    i0[a] = std::min(static_cast<int>(u), grid.dims[a] - 2);
    f[a] = u - i0[a];
  }
  const std::size_t sx = 1, sy = grid.dims[0], sz = std::size_t(grid.dims[0]) * grid.dims[1];
  const float* v = grid.values.data() + grid.index(i0[0], i0[1], i0[2]);
  const double c00 = v[0] + f[0] * (v[sx] - v[0]);
  const double c10 = v[sy] + f[0] * (v[sy + sx] - v[sy]);
  const double c01 = v[sz] + f[0] * (v[sz + sx] - v[sz]);
  const double c11 = v[sz + sy] + f[0] * (v[sz + sy + sx] - v[sz + sy]);
  const double c0 = c00 + f[1] * (c10 - c00);
  const double c1 = c01 + f[1] * (c11 - c01);
  return c0 + f[2] * (c1 - c0) + outside;
}

Vec3 gradient(const SdfGrid& grid, const Vec3& p) {
  const Vec3 h = grid.spacing();
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo[a] -= h[a];
    hi[a] += h[a];
    const bool lo_in = lo[a] >= grid.bounds.lo[a], hi_in = hi[a] <= grid.bounds.hi[a];
    if (lo_in && hi_in) {
      g[a] = (query(grid, hi) - query(grid, lo)) / (2 * h[a]);
    } else if (hi_in) {
      g[a] = (query(grid, hi) - query(grid, p)) / h[a];
    } else if (lo_in) {
      g[a] = (query(grid, p) - query(grid, lo)) / h[a];
    } else {
      g[a] = 0.0;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// file

namespace {
static_assert(std::endian::native == std::endian::little, "little-endian host required");
constexpr char kMagic[4] = {'E', 'S', 'D', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw InputError("truncated ESDF file " + path.string());
  return v;
}
}  // namespace

void save_sdf_grid(const std::filesystem::path& path, const SdfGrid& grid) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  for (int a = 0; a < 3; ++a) put<double>(out, grid.bounds.lo[a]);
  for (int a = 0; a < 3; ++a) put<double>(out, grid.bounds.hi[a]);
  for (int a = 0; a < 3; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.dims[a]));
  out.write(reinterpret_cast<const char*>(grid.values.data()), std::streamsize(sizeof(float) * grid.values.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

SdfGrid load_sdf_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open ESDF file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw InputError("not an ESDF file (bad magic): " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw InputError("unsupported ESDF version " + std::to_string(version) + ": " + path.string());
  SdfGrid g;
  for (int a = 0; a < 3; ++a) g.bounds.lo[a] = get<double>(in, path);
  for (int a = 0; a < 3; ++a) g.bounds.hi[a] = get<double>(in, path);
  for (int a = 0; a < 3; ++a) g.dims[a] = static_cast<int>(get<std::uint32_t>(in, path));
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 2 || g.dims[a] > 1 << 14) throw InputError("ESDF dims out of range: " + path.string());
  }
  g.values.resize(grid_count(g.dims));
  if (!in.read(reinterpret_cast<char*>(g.values.data()), std::streamsize(sizeof(float) * g.values.size()))) {
    throw InputError("ESDF file size does not match its dims: " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("ESDF file size does not match its dims: " + path.string());
  g.validate();
  g.provenance = "file:" + path.filename().string();
  return g;
}

}  // namespace rgbmpc
