#pragma once

// Piecewise-linear (P1) finite elements on the unit disk: deterministic
// concentric-ring mesh generation, text save/load, point location with a
// uniform bucket grid, barycentric interpolation, and the exact P1 mass
// matrix.

#include <Eigen/Sparse>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geotomo/common.hpp"

namespace geotomo {

struct BaryPoint {
  int tri = -1;
  std::array<double, 3> w{};  // barycentric coordinates, sum to 1
};

// Shape-function evaluation at a point: up to three (node, weight) pairs.
struct ShapeEval {
  std::array<int, 3> nodes{-1, -1, -1};
  std::array<double, 3> w{};
};

class TriMesh {
 public:
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // CCW node index triples
  std::vector<std::uint8_t> boundary;         // per-node boundary flag

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }

  // Checks all structural invariants (indices, orientation, degeneracy,
  // conformity, nodes inside the closed disk, boundary flags on the circle,
  // no coincident nodes, single hull loop) and builds the location index.
  // Throws NumericError on violations. Must be called after any direct
  // field construction; generate_disk_mesh and load_mesh call it.
  void finalize();

  // Area of the meshed polygon (sum of triangle areas).
  double polygon_area() const { return polygon_area_; }

  // Point location: containing triangle and barycentric coordinates
  // (each in [-1e-12, 1+1e-12], summing to 1), or nullopt for points
  // outside the mesh polygon. Ties on shared edges resolve to the lowest
  // triangle index. Pure and concurrent-safe after finalize().
  std::optional<BaryPoint> locate(Vec2 x) const;

  // Shape functions at x. Inside the polygon this is locate(); for points
  // outside the polygon but inside the closed unit disk (the O(h) sliver
  // between the inscribed hull and the circle) the point is projected onto
  // the nearest hull edge and evaluated there — the continuous extension
  // used by quadrature along rays, where extension-by-zero would bite a
  // mesh-dependent chunk out of every chord. Returns nullopt only outside
  // the closed disk (|x| > 1 + 1e-12).
  std::optional<ShapeEval> shape_clamped(Vec2 x) const;

 private:
  void build_index();

  // Bucket grid over [-1,1]^2 for locate().
  double cell_size_ = 0.0;
  int grid_dim_ = 0;
  std::vector<std::vector<int>> cells_;

  // Hull loop (CCW), star-shaped w.r.t. the origin, sorted by node angle.
  std::vector<int> hull_;
  std::vector<double> hull_angle_;

  double polygon_area_ = 0.0;
  bool finalized_ = false;
};

// Deterministic disk mesh: rings k = 0..K at radius k/K, ring k holding
// ceil(2 pi k K / sqrt(pi target)) nodes; K chosen to land the node count
// nearest the target (within 20%). Rings are triangulated by a two-pointer
// angular zipper (a fan at the center). The outermost ring sits exactly on
// the unit circle and is flagged boundary. Throws UsageError if
// target_nodes < 16. rings_out (optional) receives K.
TriMesh generate_disk_mesh(int target_nodes, int* rings_out = nullptr);

// Text format: line 1 "m K" (counts), m lines "x1 x2 b", K lines "i j k"
// (0-based CCW). 17 significant digits; round-trips bit-exactly.
// load_mesh throws IoError on unreadable or invalid content.
TriMesh load_mesh(const std::string& path);
void save_mesh(const TriMesh& mesh, const std::string& path);

// P1 interpolant sum_j coeffs_j phi_j(x), extended by zero outside the mesh
// polygon. Throws UsageError on length mismatch.
double interp(const TriMesh& mesh, const Eigen::VectorXd& coeffs, Vec2 x);

// Exact P1 mass matrix: per triangle of area S the local block
// S/12 (1 + delta_ij). Symmetric positive definite; 1' M 1 = polygon area.
class MassMatrix {
 public:
  explicit MassMatrix(Eigen::SparseMatrix<double> mat);

  const Eigen::SparseMatrix<double>& mat() const { return mat_; }
  int size() const { return static_cast<int>(mat_.rows()); }

  // Solve M u = rhs (sparse Cholesky, factored once at construction).
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  // 1' M 1 = meshed polygon area.
  double total() const;

 private:
  Eigen::SparseMatrix<double> mat_;
  std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> llt_;
};

MassMatrix mass_matrix(const TriMesh& mesh);

}  // namespace geotomo
