#include "rgbmpc/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace rgbmpc {

namespace mc {
extern const std::array<std::array<int, 16>, 256> kTriTable;
}

// ---------------------------------------------------------------------------
// density grid

void DensityGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InputError("density grid needs at least 2 nodes per axis");
  }
  if (!(bounds.volume() > 0)) throw InputError("density grid bounds have non-positive volume");
  if (values.size() != grid_count(dims)) throw InputError("density grid value count does not match dims");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0) {
      throw NumericError("density grid value " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

double DensityGrid::interpolate(const Vec3& p) const {
  const Vec3 q = bounds.clamp(p);
  const Vec3 h = spacing();
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (q[a] - bounds.lo[a]) / h[a];
    i0[a] = std::clamp(static_cast<int>(std::floor(u)), 0, dims[a] - 2);
    f[a] = u - i0[a];
  }
  double v = 0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
    v += w * at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
  }
  return v;
}

namespace {
DensityGrid empty_grid(const Aabb& bounds, const Dims3& dims) {
  DensityGrid g;
  g.bounds = bounds;
  g.dims = dims;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InputError("density grid needs at least 2 nodes per axis");
  }
  if (!(bounds.volume() > 0)) throw InputError("density grid bounds have non-positive volume");
  g.values.assign(grid_count(dims), 0.0f);
  return g;
}

void check_value(double v, const DensityGrid& g, int i, int j, int k) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite density at grid node (" << i << ", " << j << ", " << k << ")";
    throw NumericError(msg.str());
  }
  (void)g;
}
}  // namespace

DensityGrid sample_density_grid(const std::function<double(const Vec3&)>& density, const Aabb& bounds,
                                const Dims3& dims) {
  DensityGrid g = empty_grid(bounds, dims);
  parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const double v = density(g.point(i, j, k));
        check_value(v, g, i, j, k);
        g.values[g.index(i, j, k)] = static_cast<float>(std::max(0.0, v));
      }
    }
  });
  return g;
}

DensityGrid sample_density_grid(const FieldParams<float>& field, const Aabb& bounds, const Dims3& dims) {
  DensityGrid g = empty_grid(bounds, dims);
  field.check_finite();
  const std::size_t slab = std::size_t(dims[0]) * dims[1];
  std::vector<Vec3> pts(slab);
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) pts[std::size_t(j) * dims[0] + i] = g.point(i, j, k);
    }
    const std::vector<double> d = density_batch(field, pts);
    for (std::size_t s = 0; s < slab; ++s) {
      const int i = static_cast<int>(s % dims[0]), j = static_cast<int>(s / dims[0]);
      check_value(d[s], g, i, j, k);
      g.values[g.index(i, j, k)] = static_cast<float>(d[s]);
    }
  }
  return g;
}

namespace {

// Separable cube min (erode) or max (dilate) of a 0/1 mask along one axis. Nodes past the grid
// read as `outside`, except below z = 0 which reads as `floor`.
void morph_axis(std::vector<std::uint8_t>& mask, const Dims3& n, int axis, int r, bool erode, std::uint8_t outside,
                std::uint8_t floor) {
  const std::vector<std::uint8_t> src = mask;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? std::size_t(n[0]) : std::size_t(n[0]) * n[1];
  const int len = n[axis];
  for (std::size_t id = 0; id < src.size(); ++id) {
    const int c = static_cast<int>((id / stride) % len);
    std::uint8_t v = src[id];
    for (int d = -r; d <= r && (erode ? v : !v); ++d) {
      const int m = c + d;
      const std::uint8_t w = m < 0 ? (axis == 2 ? floor : outside) : m >= len ? outside : src[id + d * static_cast<std::ptrdiff_t>(stride)];
      v = erode ? std::min(v, w) : std::max(v, w);
    }
    mask[id] = v;
  }
}

}  // namespace

std::size_t fill_enclosed_voids(DensityGrid& grid, double isovalue, float fill_value, int seal) {
  if (seal < 0) throw InputError("void seal radius must be >= 0");
  const Dims3& n = grid.dims;
  std::vector<std::uint8_t> open(grid.values.size());
  for (std::size_t id = 0; id < open.size(); ++id) open[id] = grid.values[id] < isovalue;
  std::vector<std::uint8_t> passable = open;
  if (seal > 0) {
    for (int a = 0; a < 3; ++a) morph_axis(passable, n, a, seal, true, 1, 0);
  }
  std::vector<std::uint8_t> reached(grid.values.size(), 0);
  std::deque<std::size_t> queue;
  auto seed = [&](int i, int j, int k) {
    const std::size_t id = grid.index(i, j, k);
    if (!reached[id] && passable[id]) {
      reached[id] = 1;
      queue.push_back(id);
    }
  };
  for (int k = 0; k < n[2]; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i) {
        const bool open_face = i == 0 || i == n[0] - 1 || j == 0 || j == n[1] - 1 || k == n[2] - 1;
        if (open_face) seed(i, j, k);
      }
    }
  }
  while (!queue.empty()) {
    const std::size_t id = queue.front();
    queue.pop_front();
    const int i = static_cast<int>(id % n[0]);
    const int j = static_cast<int>((id / n[0]) % n[1]);
    const int k = static_cast<int>(id / (std::size_t(n[0]) * n[1]));
    if (i > 0) seed(i - 1, j, k);
    if (i + 1 < n[0]) seed(i + 1, j, k);
    if (j > 0) seed(i, j - 1, k);
    if (j + 1 < n[1]) seed(i, j + 1, k);
    if (k > 0) seed(i, j, k - 1);
    if (k + 1 < n[2]) seed(i, j, k + 1);
  }
  if (seal > 0) {
    for (int a = 0; a < 3; ++a) morph_axis(reached, n, a, seal, false, 0, 0);
  }
  std::size_t filled = 0;
  for (std::size_t id = 0; id < grid.values.size(); ++id) {
    if (open[id] && !reached[id]) {
      grid.values[id] = fill_value;
      ++filled;
    }
  }
  return filled;
}

// ---------------------------------------------------------------------------
// marching cubes

void TriangleMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int v : t) {
      if (v < 0 || v >= nv) throw InputError("mesh triangle index out of range");
    }
  }
  if (!normals.empty() && normals.size() != vertices.size()) throw InputError("mesh normal count mismatch");
  if (!cap.empty() && cap.size() != triangles.size()) throw InputError("mesh cap flag count mismatch");
}

namespace {

// Cube corner offsets and edge endpoints in the table's numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6}, {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct RawVertex {
  std::uint64_t edge;
  Vec3 p;
};

struct SlabOutput {
  std::vector<RawVertex> corners;  // 3 per triangle
  std::vector<std::uint8_t> cap;
};

}  // namespace

TriangleMesh marching_cubes(const DensityGrid& grid, const MarchingCubesOptions& opt) {
  grid.validate();
  const Dims3& n = grid.dims;
  const double iso = opt.isovalue;
  const Vec3 h = grid.spacing();
  const int pad = opt.cap_boundary ? 1 : 0;
  // padded node coordinates run over [-pad, n + pad)
  const std::uint64_t px = n[0] + 2 * pad, py = n[1] + 2 * pad;
  auto value = [&](int i, int j, int k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= n[0] || j >= n[1] || k >= n[2]) return 0.0;
    return grid.at(i, j, k);
  };
  auto node_id = [&](int i, int j, int k) -> std::uint64_t {
    return (std::uint64_t(k + pad) * py + std::uint64_t(j + pad)) * px + std::uint64_t(i + pad);
  };
  auto position = [&](int i, int j, int k) -> Vec3 {
    return grid.bounds.lo + Vec3(i * h.x(), j * h.y(), k * h.z());
  };

  const int c_lo = -pad, c_hi_x = n[0] - 1 + pad, c_hi_y = n[1] - 1 + pad, c_hi_z = n[2] - 1 + pad;
  const std::size_t slabs = static_cast<std::size_t>(c_hi_z - c_lo);
  std::vector<SlabOutput> out(slabs);
  parallel_for(slabs, [&](std::size_t s) {
    const int k = c_lo + static_cast<int>(s);
    SlabOutput& o = out[s];
    double v[8];
    for (int j = c_lo; j < c_hi_y; ++j) {
      for (int i = c_lo; i < c_hi_x; ++i) {
        int index = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = value(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (v[c] < iso) index |= 1 << c;
        }
        if (index == 0 || index == 255) continue;
        const bool boundary_cell = i < 0 || j < 0 || k < 0 || i >= n[0] - 1 || j >= n[1] - 1 || k >= n[2] - 1;
        const auto& tri = mc::kTriTable[index];
        for (int t = 0; tri[t] != -1; t += 3) {
          RawVertex rv[3];
          for (int m = 0; m < 3; ++m) {
            const int e = tri[t + m];
            const int a = kEdge[e][0], b = kEdge[e][1];
            const int ai = i + kCorner[a][0], aj = j + kCorner[a][1], ak = k + kCorner[a][2];
            int axis = 0;
            while (kCorner[a][axis] == kCorner[b][axis]) ++axis;
            const double f = (iso - v[a]) / (v[b] - v[a]);
            Vec3 p = position(ai, aj, ak);
            p[axis] += f * h[axis];
            if (pad) p = grid.bounds.clamp(p);
            rv[m] = {node_id(ai, aj, ak) * 3 + axis, p};
          }
          o.corners.push_back(rv[0]);
          o.corners.push_back(rv[1]);
          o.corners.push_back(rv[2]);
          o.cap.push_back(boundary_cell ? 1 : 0);
        }
      }
    }
  });

  TriangleMesh mesh;
  std::size_t total = 0;
  for (const auto& o : out) total += o.cap.size();
  mesh.triangles.reserve(total);
  std::unordered_map<std::uint64_t, int> weld;
  weld.reserve(total);
  for (const auto& o : out) {
    for (std::size_t t = 0; t < o.cap.size(); ++t) {
      std::array<int, 3> tri{};
      for (int m = 0; m < 3; ++m) {
        const RawVertex& rv = o.corners[3 * t + m];
        auto [it, inserted] = weld.try_emplace(rv.edge, static_cast<int>(mesh.vertices.size()));
        if (inserted) mesh.vertices.push_back(rv.p);
        tri[m] = it->second;
      }
      mesh.triangles.push_back(tri);
      if (pad) mesh.cap.push_back(o.cap[t]);
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// cleanup and topology

namespace {

double triangle_area(const TriangleMesh& m, const std::array<int, 3>& t) {
  return 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).norm();
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

/// Component label per triangle (triangles sharing a vertex are connected), labels dense from 0
/// in order of first triangle.
std::vector<int> triangle_components(const TriangleMesh& m, std::size_t* count) {
  UnionFind uf(m.vertices.size());
  for (const auto& t : m.triangles) {
    uf.unite(t[0], t[1]);
    uf.unite(t[0], t[2]);
  }
  std::vector<int> label(m.triangles.size());
  std::unordered_map<int, int> dense;
  for (std::size_t i = 0; i < m.triangles.size(); ++i) {
    const int root = uf.find(m.triangles[i][0]);
    auto [it, inserted] = dense.try_emplace(root, static_cast<int>(dense.size()));
    label[i] = it->second;
  }
  if (count) *count = dense.size();
  return label;
}

TriangleMesh compact(const TriangleMesh& m, const std::vector<bool>& keep_triangle, std::size_t* vertices_removed) {
  TriangleMesh out;
  std::vector<int> remap(m.vertices.size(), -1);
  for (std::size_t i = 0; i < m.triangles.size(); ++i) {
    if (!keep_triangle[i]) continue;
    std::array<int, 3> t{};
    for (int k = 0; k < 3; ++k) {
      int& r = remap[m.triangles[i][k]];
      if (r < 0) {
        r = static_cast<int>(out.vertices.size());
        out.vertices.push_back(m.vertices[m.triangles[i][k]]);
        if (!m.normals.empty()) out.normals.push_back(m.normals[m.triangles[i][k]]);
      }
      t[k] = r;
    }
    out.triangles.push_back(t);
    if (!m.cap.empty()) out.cap.push_back(m.cap[i]);
  }
  if (vertices_removed) *vertices_removed = m.vertices.size() - out.vertices.size();
  return out;
}

}  // namespace

TriangleMesh mesh_cleanup(const TriangleMesh& mesh, std::size_t min_component_triangles, CleanupReport* report) {
  mesh.validate();
  CleanupReport r;
  std::vector<bool> keep(mesh.triangles.size(), true);
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2] || triangle_area(mesh, t) <= 1e-12) {
      keep[i] = false;
      ++r.degenerate_removed;
    }
  }
  std::size_t v1 = 0, v2 = 0;
  TriangleMesh stage = compact(mesh, keep, &v1);

  std::size_t ncomp = 0;
  const std::vector<int> label = triangle_components(stage, &ncomp);
  std::vector<std::size_t> size(ncomp, 0);
  for (int l : label) ++size[l];
  std::vector<bool> keep2(stage.triangles.size(), true);
  for (std::size_t c = 0; c < ncomp; ++c) {
    if (size[c] < min_component_triangles) {
      ++r.components_removed;
      r.triangles_removed += size[c];
    }
  }
  for (std::size_t i = 0; i < label.size(); ++i) keep2[i] = size[label[i]] >= min_component_triangles;
  TriangleMesh out = compact(stage, keep2, &v2);
  r.vertices_removed = v1 + v2;
  if (report) *report = r;
  return out;
}

WatertightReport watertight_report(const TriangleMesh& mesh) {
  mesh.validate();
  WatertightReport r;
  std::unordered_map<std::uint64_t, int> edges;
  edges.reserve(mesh.triangles.size() * 2);
  auto key = [](int a, int b) {
    if (a > b) std::swap(a, b);
    return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
  };
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) ++edges[key(t[k], t[(k + 1) % 3])];
  }
  for (const auto& [e, c] : edges) {
    if (c == 1) ++r.boundary_edges;
    if (c > 2) ++r.non_manifold_edges;
  }
  for (auto c : mesh.cap) r.cap_triangles += c ? 1 : 0;

  const std::vector<int> label = triangle_components(mesh, &r.components);
  std::vector<long> faces(r.components, 0), verts(r.components, 0), nedges(r.components, 0);
  std::vector<int> vlabel(mesh.vertices.size(), -1);
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    ++faces[label[i]];
    for (int v : mesh.triangles[i]) vlabel[v] = label[i];
  }
  for (int l : vlabel) {
    if (l >= 0) ++verts[l];
  }
  for (const auto& [e, c] : edges) ++nedges[vlabel[static_cast<int>(e & 0xffffffffu)]];
  r.euler_characteristics.resize(r.components);
  for (std::size_t c = 0; c < r.components; ++c) r.euler_characteristics[c] = verts[c] - nedges[c] + faces[c];
  return r;
}

void compute_vertex_normals(TriangleMesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (int v : t) mesh.normals[v] += n;
  }
  for (auto& n : mesh.normals) {
    const double l = n.norm();
    n = l > 0 ? Vec3(n / l) : Vec3::UnitZ();
  }
}

double mesh_volume(const TriangleMesh& mesh) {
  double v = 0;
  for (const auto& t : mesh.triangles) {
    v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  return v / 6.0;
}

std::uint64_t mesh_hash(const TriangleMesh& mesh) {
  std::uint64_t h = fnv1a("mesh");
  for (const auto& v : mesh.vertices) h = fnv1a(v.data(), sizeof(double) * 3, h);
  for (const auto& t : mesh.triangles) h = fnv1a(t.data(), sizeof(int) * 3, h);
  return h;
}

// ---------------------------------------------------------------------------
// files

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw InputError("truncated file " + path.string());
  return v;
}

}  // namespace

void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const bool normals = !mesh.normals.empty();
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nproperty uchar cap\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(mesh.vertices[i][a]));
    if (normals) {
      for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(mesh.normals[i][a]));
    }
  }
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    put<std::uint8_t>(out, 3);
    for (int v : mesh.triangles[i]) put<std::int32_t>(out, v);
    put<std::uint8_t>(out, mesh.cap.empty() ? 0 : mesh.cap[i]);
  }
  if (!out) throw InputError("failed writing " + path.string());
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open mesh " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw InputError("not a PLY file: " + path.string());
  std::size_t nv = 0, nf = 0;
  std::vector<std::string> vprops;
  bool face_cap = false, in_face = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw InputError("only binary little-endian PLY is supported: " + path.string());
    } else if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_face = name == "face";
      if (name == "vertex") nv = count;
      else if (name == "face") nf = count;
      else throw InputError("unexpected PLY element '" + name + "': " + path.string());
    } else if (word == "property") {
      std::string type, name;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it >> name;
        if (ct != "uchar" || it != "int") throw InputError("unsupported PLY face list type: " + path.string());
      } else {
        ls >> name;
        if (in_face) {
          if (name != "cap" || type != "uchar") throw InputError("unsupported PLY face property: " + path.string());
          face_cap = true;
        } else {
          if (type != "float") throw InputError("PLY vertex properties must be float: " + path.string());
          vprops.push_back(name);
        }
      }
    }
  }
  const bool normals = vprops.size() == 6;
  if (!(vprops.size() == 3 || normals) || vprops[0] != "x" || vprops[1] != "y" || vprops[2] != "z") {
    throw InputError("PLY vertices must be x y z [nx ny nz]: " + path.string());
  }
  TriangleMesh m;
  m.vertices.resize(nv);
  if (normals) m.normals.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    for (int a = 0; a < 3; ++a) m.vertices[i][a] = get<float>(in, path);
    if (normals) {
      for (int a = 0; a < 3; ++a) m.normals[i][a] = get<float>(in, path);
    }
  }
  m.triangles.resize(nf);
  if (face_cap) m.cap.resize(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    if (get<std::uint8_t>(in, path) != 3) throw InputError("PLY faces must be triangles: " + path.string());
    for (int k = 0; k < 3; ++k) m.triangles[i][k] = get<std::int32_t>(in, path);
    if (face_cap) m.cap[i] = get<std::uint8_t>(in, path);
  }
  m.validate();
  if (std::all_of(m.cap.begin(), m.cap.end(), [](std::uint8_t c) { return c == 0; })) m.cap.clear();
  return m;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  const bool normals = !mesh.normals.empty();
  for (const auto& t : mesh.triangles) {
    out << 'f';
    for (int v : t) {
      out << ' ' << v + 1;
      if (normals) out << "//" << v + 1;
    }
    out << '\n';
  }
}

namespace {
constexpr char kGridMagic[4] = {'D', 'G', 'R', 'D'};
constexpr std::uint32_t kGridVersion = 1;
}  // namespace

void save_density_grid(const std::filesystem::path& path, const DensityGrid& grid) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kGridMagic, 4);
  put<std::uint32_t>(out, kGridVersion);
  for (int a = 0; a < 3; ++a) put<double>(out, grid.bounds.lo[a]);
  for (int a = 0; a < 3; ++a) put<double>(out, grid.bounds.hi[a]);
  for (int a = 0; a < 3; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.dims[a]));
  out.write(reinterpret_cast<const char*>(grid.values.data()), std::streamsize(sizeof(float) * grid.values.size()));
}

DensityGrid load_density_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open density grid " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kGridMagic, 4) != 0) {
    throw InputError("not a density grid (bad magic): " + path.string());
  }
  if (get<std::uint32_t>(in, path) != kGridVersion) throw InputError("unsupported density grid version: " + path.string());
  DensityGrid g;
  for (int a = 0; a < 3; ++a) g.bounds.lo[a] = get<double>(in, path);
  for (int a = 0; a < 3; ++a) g.bounds.hi[a] = get<double>(in, path);
  for (int a = 0; a < 3; ++a) g.dims[a] = static_cast<int>(get<std::uint32_t>(in, path));
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 2 || g.dims[a] > 1 << 14) throw InputError("density grid dims out of range: " + path.string());
  }
  g.values.resize(grid_count(g.dims));
  if (!in.read(reinterpret_cast<char*>(g.values.data()), std::streamsize(sizeof(float) * g.values.size()))) {
    throw InputError("truncated density grid " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("trailing bytes in density grid " + path.string());
  g.validate();
  return g;
}

}  // namespace rgbmpc
