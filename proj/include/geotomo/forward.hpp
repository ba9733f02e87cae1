#pragma once

// Discretized ray transforms on the fan-beam measurement grid: the sparse
// matrix A with entries (I phi_j)(beta_i, alpha_i) for the plain, attenuated
// and boundary-weighted transforms, synthetic data with white noise scaled
// by the grid measure, and the Galerkin normal operator m^{-1} A' n A.

#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <string>

#include "geotomo/geometry.hpp"
#include "geotomo/mesh.hpp"

namespace geotomo {

//----------------------------------------------------------------------------
// Measurement grid: cell-centered on [0, 2pi) x (-pi/2, pi/2); the diagonal
// weight n_ii = (2 pi^2 / (n_beta n_alpha)) cos alpha_i is the midpoint-rule
// weight of the influx measure cos alpha dalpha dbeta (total mass 4 pi).
// Rays are ordered alpha-fastest: i = i_beta * n_alpha + i_alpha.
//----------------------------------------------------------------------------

struct FanBeamGrid {
  int n_beta = 0;
  int n_alpha = 0;
  std::vector<FanBeamCoord> coords;
  Eigen::VectorXd weights;

  int size() const { return n_beta * n_alpha; }
};

// Throws UsageError unless n_beta, n_alpha >= 2.
FanBeamGrid build_grid(int n_beta, int n_alpha);

//----------------------------------------------------------------------------
// Assembled transform.
//----------------------------------------------------------------------------

enum class TransformVariant { Plain, Attenuated, BoundaryWeighted };

std::string variant_name(TransformVariant v);

struct RayTransformMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> entries;  // n x m
  TransformVariant variant = TransformVariant::Plain;
  // Provenance of the assembly (not all fields survive save/load).
  MetricKind metric_kind = MetricKind::Euclidean;
  double quad_step = 0.0;
  int mesh_nodes = 0;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }
};

// Plain transform: composite trapezoid along each traced ray (uniform
// g-arclength samples, one final partial step).
RayTransformMatrix assemble_A(const TriMesh& mesh, const FanBeamGrid& grid,
                              const ConformalMetric& metric, double quad_step = 1e-3);

// Attenuated transform I_a: the inner integral of the attenuation
// coefficient a (P1 coefficients on the same mesh) accumulates by a running
// trapezoid over the same path samples.
RayTransformMatrix assemble_A_attenuated(const TriMesh& mesh, const FanBeamGrid& grid,
                                         const ConformalMetric& metric,
                                         const Eigen::VectorXd& a_coeffs,
                                         double quad_step = 1e-3);

// Boundary-weighted transform I_d h = I(d_M^{-1/2} h) with
// d_M(x) = (1-|x|^2)/2. The integrand has inverse-square-root endpoint
// singularities, removed by substituting t = (tau/2)(1 - cos theta) and
// applying the midpoint rule in theta with ceil(tau/quad_step) points;
// positions are interpolated linearly between the stored path samples.
RayTransformMatrix assemble_A_weighted(const TriMesh& mesh, const FanBeamGrid& grid,
                                       const ConformalMetric& metric,
                                       double quad_step = 1e-3);

//----------------------------------------------------------------------------
// Synthetic data Y = A f + eps z / sqrt(n_ii), z iid standard normal from
// one sequential seeded stream (bit-reproducible).
//----------------------------------------------------------------------------

struct Sinogram {
  Eigen::VectorXd values;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
};

// Matrix route: f given as P1 coefficients on the assembly mesh.
Sinogram simulate_data(const RayTransformMatrix& A, const FanBeamGrid& grid,
                       const Eigen::VectorXd& f_coeffs, double eps, std::uint64_t seed);

// Analytic route (inverse-crime avoidance): integrates f directly along
// geodesics retraced at quad_step/4, independent of any mesh.
Sinogram simulate_data_analytic(const ConformalMetric& metric, const FanBeamGrid& grid,
                                const std::function<double(Vec2)>& f, double eps,
                                std::uint64_t seed, double quad_step = 1e-3);

// Analytic route for boundary-weighted data: integrates d_M^{-1/2} h with
// the theta-substitution quadrature at quad_step/4 (the integrand is
// singular, so a plain Riemann sum would converge at half order).
Sinogram simulate_data_analytic_weighted(const ConformalMetric& metric,
                                         const FanBeamGrid& grid,
                                         const std::function<double(Vec2)>& h, double eps,
                                         std::uint64_t seed, double quad_step = 1e-3);

//----------------------------------------------------------------------------
// Discrete normal operator: coeffs -> (2π)^{-1} diag(m·1)^{-1} A' n
// (A coeffs) — the transform composed with back-projection, normalized by
// the lumped mass and the fiber measure 2π so it is the angular average
// over directions. Applied to the all-ones vector it approximates the mean
// chord length through each node, 4E(r)/π in the Euclidean disk. Pairing
// through the lumped diagonal, ⟨normal_apply(f), f'⟩ = ⟨Af, Af'⟩_n / 2π
// exactly.
//----------------------------------------------------------------------------

Eigen::VectorXd normal_apply(const RayTransformMatrix& A, const FanBeamGrid& grid,
                             const MassMatrix& mass, const Eigen::VectorXd& coeffs);

//----------------------------------------------------------------------------
// Text I/O. Matrix: header "n m nnz variant", then nnz lines "i j value"
// (0-based, 17 significant digits). Sinogram: CSV "beta,alpha,value" with a
// header line.
//----------------------------------------------------------------------------

void save_matrix(const RayTransformMatrix& A, const std::string& path);
RayTransformMatrix load_matrix(const std::string& path);

void save_sinogram(const FanBeamGrid& grid, const Sinogram& sino, const std::string& path);
Sinogram load_sinogram(const FanBeamGrid& grid, const std::string& path);

}  // namespace geotomo
