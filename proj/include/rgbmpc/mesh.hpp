#pragma once

// Density grids and isosurface meshes: sampling a density on a regular cell-vertex grid,
// marching cubes, cleanup and combinatorial watertightness checks.

#include "rgbmpc/common.hpp"
#include "rgbmpc/field.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace rgbmpc {

/// Densities at grid nodes, x fastest then y then z.
struct DensityGrid {
  Aabb bounds;
  Dims3 dims{2, 2, 2};
  std::vector<float> values;

  std::size_t index(int i, int j, int k) const { return (std::size_t(k) * dims[1] + j) * dims[0] + i; }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 point(int i, int j, int k) const { return grid_point(bounds, dims, i, j, k); }
  Vec3 spacing() const { return grid_spacing(bounds, dims); }
  /// Trilinear interpolant of the node values (p clamped into bounds).
  double interpolate(const Vec3& p) const;
  /// Throws InputError on bad dims/size and NumericError on a negative or non-finite value.
  void validate() const;
};

/// Evaluates density at every node, parallel over z slabs.
DensityGrid sample_density_grid(const std::function<double(const Vec3&)>& density, const Aabb& bounds,
                                const Dims3& dims);
/// Same with a trained field (density head only).
DensityGrid sample_density_grid(const FieldParams<float>& field, const Aabb& bounds, const Dims3& dims);

/// Marks enclosed low-density pockets (not 6-connected to an open face of the grid) as solid by
/// raising them to fill_value. The bottom face (z = lo) counts as closed: it sits on the table.
/// With seal > 0 the flood runs through free space eroded by a (2 seal + 1)^3 cube and is dilated
/// back afterwards, so pockets reached only through channels narrower than that are filled too.
/// Returns the number of nodes raised.
std::size_t fill_enclosed_voids(DensityGrid& grid, double isovalue, float fill_value, int seal = 0);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  /// Optional per-vertex normals (empty or one per vertex).
  std::vector<Vec3> normals;
  /// Optional per-triangle flag: 1 for triangles that close the surface on the grid boundary.
  std::vector<std::uint8_t> cap;

  bool empty() const { return triangles.empty(); }
  /// Throws InputError if an index is out of range or the optional arrays have the wrong size.
  void validate() const;
};

struct MarchingCubesOptions {
  double isovalue = 2.5;
  /// Treat everything beyond the grid as zero density so surfaces clipped by the bounds get
  /// closed by flat caps lying on the bounds faces. Cap triangles are flagged.
  bool cap_boundary = false;
};

/// Classic 256-case table extraction with linear edge interpolation; vertices welded on edge ids.
/// Triangles wind counter-clockwise seen from outside (low density).
TriangleMesh marching_cubes(const DensityGrid& grid, const MarchingCubesOptions& opt = {});

struct CleanupReport {
  std::size_t degenerate_removed = 0;
  std::size_t components_removed = 0;
  std::size_t triangles_removed = 0;  // in dropped components
  std::size_t vertices_removed = 0;
};

/// Drops triangles with area <= 1e-12 or repeated indices, then connected components with fewer
/// than min_component_triangles, and unreferenced vertices.
TriangleMesh mesh_cleanup(const TriangleMesh& mesh, std::size_t min_component_triangles = 20,
                          CleanupReport* report = nullptr);

struct WatertightReport {
  std::size_t boundary_edges = 0;
  std::size_t non_manifold_edges = 0;
  std::size_t components = 0;
  std::size_t cap_triangles = 0;
  /// V - E + F per component (component order: by smallest triangle index).
  std::vector<long> euler_characteristics;

  bool watertight() const { return boundary_edges == 0 && non_manifold_edges == 0; }
};

WatertightReport watertight_report(const TriangleMesh& mesh);

/// Area-weighted vertex normals from the triangle winding.
void compute_vertex_normals(TriangleMesh& mesh);

/// Enclosed volume by the divergence theorem (positive for outward winding).
double mesh_volume(const TriangleMesh& mesh);

/// Order-independent content hash of vertices and triangles.
std::uint64_t mesh_hash(const TriangleMesh& mesh);

// ---------------------------------------------------------------------------
// files

/// Binary little-endian PLY: float x y z [nx ny nz] per vertex; uchar-count int indices and a
/// uchar cap flag per face.
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_ply(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// "DGRD", u32 version, 6 x f64 bounds, 3 x u32 dims, little-endian f32 values x fastest.
void save_density_grid(const std::filesystem::path& path, const DensityGrid& grid);
DensityGrid load_density_grid(const std::filesystem::path& path);

}  // namespace rgbmpc
