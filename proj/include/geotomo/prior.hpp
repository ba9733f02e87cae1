#pragma once

// Gaussian process prior on mesh nodes: Matérn covariance with jittered
// Cholesky factor, and the boundary-weighting transform f = d_M^{-1/2} h.

#include <Eigen/Dense>
#include <cstdint>

#include "geotomo/mesh.hpp"

namespace geotomo {

// Prior X ~ N(0, sigma^{-1} Gamma), Gamma_ij = k_{nu,ell}(|x_i - x_j|).
struct MaternParams {
  double nu = 1.5;
  double ell = 0.2;
  double sigma = 1.0;
};

// Matérn kernel normalized to k(0) = 1:
// k(r) = (2^{1-nu}/Gamma(nu)) (sqrt(2 nu) r / ell)^nu K_nu(sqrt(2 nu) r / ell).
// Half-integer nu in {1/2, 3/2, 5/2} use the closed forms; other nu go
// through std::cyl_bessel_k. Throws UsageError on negative r or nonpositive
// parameters.
double matern_kernel(const MaternParams& params, double r);

// Dense covariance with its jittered lower Cholesky factor
// L L' = Gamma + jitter I. Immutable after assembly.
struct PriorCovariance {
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd L;  // lower triangular
  double jitter = 0.0;
  MaternParams params;

  int size() const { return static_cast<int>(gamma.rows()); }

  // (Gamma + jitter I)^{-1} v through the factor (two triangular solves).
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
};

// Gamma_ij = k(|x_i - x_j|) over mesh nodes; jitter starts at
// 1e-10 trace(Gamma)/m and grows tenfold until the factorization succeeds,
// capped at 1e-6 (NumericError past the cap — signals pathological node
// duplication).
PriorCovariance assemble_prior_cov(const TriMesh& mesh, const MaternParams& params);

// Boundary-distance weight d_M(x) = (1 - |x|^2)/2 (exact to first order at
// the boundary). Throws UsageError outside the closed disk.
double dm_eval(Vec2 x);

// One draw h = sigma^{-1/2} L z, z iid standard normal from the caller's
// stream.
Eigen::VectorXd prior_draw(const PriorCovariance& cov, Rng& rng);

// Weighted draw f_j = h_j / sqrt(d_M(x_j)) for the blowup-prior example.
// Meshes with boundary nodes (d_M = 0) are rejected (UsageError): either
// exclude boundary nodes or work in h-coordinates against the weighted
// operator instead.
Eigen::VectorXd weighted_prior_draw(const PriorCovariance& cov, const TriMesh& mesh,
                                    std::uint64_t seed);

}  // namespace geotomo
