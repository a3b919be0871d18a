#pragma once

// Signed distance to a triangle mesh: BVH over triangles for exact closest-point queries,
// generalized winding number for the sign, and a baked trilinear grid for fast lookups.

#include "rgbmpc/mesh.hpp"
#include "rgbmpc/scene.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

namespace rgbmpc {

/// Exact distance from p to triangle abc (vertex, edge and face regions).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* closest = nullptr);

/// Signed solid angle of triangle abc seen from p (positive when p is behind a CCW triangle).
double triangle_solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct BvhNode {
  Aabb box;
  int left = -1, right = -1;  // children; -1 for leaves
  int first = 0, count = 0;   // triangle range in MeshDistanceIndex::order (leaves)
  // far-field winding data: area-weighted normal sum, area-weighted centroid, bounding radius
  Vec3 normal_sum = Vec3::Zero();
  Vec3 centroid = Vec3::Zero();
  double radius = 0.0;

  bool leaf() const { return left < 0; }
};

struct MeshDistanceIndex {
  std::vector<BvhNode> nodes;  // nodes[0] is the root
  std::vector<int> order;      // triangle ids in leaf order
  std::vector<Vec3> a, b, c;   // triangle corners, indexed by triangle id
  int leaf_size = 4;
  std::uint64_t mesh_hash = 0;

  std::size_t triangle_count() const { return a.size(); }
};

/// Binned SAH build; deterministic given the mesh.
MeshDistanceIndex build_index(const TriangleMesh& mesh, int leaf_size = 4);

struct ClosestHit {
  double distance = std::numeric_limits<double>::infinity();
  Vec3 point = Vec3::Zero();
  int triangle = -1;
};

/// Exact closest triangle. Only triangles closer than upper_bound are considered.
ClosestHit closest_point(const MeshDistanceIndex& index, const Vec3& p,
                         double upper_bound = std::numeric_limits<double>::infinity());

/// Generalized winding number; nodes farther than beta times their radius use a dipole
/// approximation (beta = 0 evaluates every triangle exactly).
double winding_number(const MeshDistanceIndex& index, const Vec3& p, double beta = 3.0);

/// Distance to the closest triangle, negative iff winding_number(p) > 0.5.
double signed_distance(const MeshDistanceIndex& index, const Vec3& p);

/// Signed distances at cell-vertex grid nodes, x fastest.
struct SdfGrid {
  Aabb bounds;
  Dims3 dims{2, 2, 2};
  std::vector<float> values;
  /// Free-form description of what the grid was built from (not stored in the file).
  std::string provenance;

  std::size_t index(int i, int j, int k) const { return (std::size_t(k) * dims[1] + j) * dims[0] + i; }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 spacing() const { return grid_spacing(bounds, dims); }
  void validate() const;
};

struct BakeOptions {
  /// Extra solids unioned with the mesh (typically the table half-space).
  std::vector<Primitive> support;
  /// Sign nodes by flood fill where a neighbor's distance proves no surface lies between them;
  /// false evaluates the winding number at every node.
  bool propagate_sign = true;
};

/// values[i,j,k] = min(signed_distance(node), support sdf), parallel over z slabs.
SdfGrid bake_grid(const MeshDistanceIndex& index, const Aabb& bounds, const Dims3& dims, const BakeOptions& opt = {});
/// Samples any signed distance function on the grid.
SdfGrid bake_function(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds, const Dims3& dims);

/// Trilinear lookup; outside the bounds the value at the clamped point plus the clamp distance.
double query(const SdfGrid& grid, const Vec3& p);
/// Central differences at the grid spacing, one-sided where a stencil point leaves the bounds.
Vec3 gradient(const SdfGrid& grid, const Vec3& p);

/// "ESDF", u32 version, 6 x f64 bounds, 3 x u32 dims, little-endian f32 values x fastest.
void save_sdf_grid(const std::filesystem::path& path, const SdfGrid& grid);
SdfGrid load_sdf_grid(const std::filesystem::path& path);

}  // namespace rgbmpc
