#pragma once

// Conjugate Gaussian inversion. The posterior for Y = A X + eps W given
// X ~ N(0, sigma^{-1} Gamma) has precision H = eps^{-2} A' n A + sigma
// Gamma^{-1} and mean X_c = eps^{-2} H^{-1} A' n Y. Everything is computed
// through a whitened factorization that never forms Gamma^{-1} or a dense
// posterior covariance: with Gamma + jitter I = L L' and
// H_u := eps^{-2} (A L)' n (A L) + sigma I = L_u L_u',
// H = L^{-T} H_u L^{-1}, so H^{-1} v = L (L_u^{-T} (L_u^{-1} (L' v))) and
// X - X_c = L (L_u^{-T} z) realizes the W W' = H sampler with
// W = L^{-T} L_u.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "geotomo/forward.hpp"
#include "geotomo/prior.hpp"

namespace geotomo {

struct GaussianPosterior {
  Eigen::VectorXd mean;  // X_c
  Eigen::MatrixXd Lu;    // lower Cholesky factor of the whitened precision
  std::shared_ptr<const PriorCovariance> prior;
  double epsilon = 0.0;
  double sigma = 0.0;
  double residual = 0.0;  // relative residual of H X_c = eps^{-2} A' n Y
  // Provenance
  int n_rays = 0;
  int mesh_nodes = 0;
  TransformVariant variant = TransformVariant::Plain;

  // H^{-1} v via triangular solves.
  Eigen::VectorXd solve_precision(const Eigen::VectorXd& v) const;
};

// Factors the posterior precision and solves for the mean (one step of
// iterative refinement keeps the relative residual at ~1e-12). Throws
// UsageError on eps <= 0 or dimension mismatch, NumericError if the
// whitened precision fails to factor.
GaussianPosterior compute_posterior(const RayTransformMatrix& A, const FanBeamGrid& grid,
                                    std::shared_ptr<const PriorCovariance> prior,
                                    double sigma, double epsilon, const Sinogram& Y);

// count x m matrix of posterior draws X_c + L (L_u^{-T} z). Same seed, same
// draws, bit for bit.
Eigen::MatrixXd sample_posterior(const GaussianPosterior& post, int count,
                                 std::uint64_t seed);

//----------------------------------------------------------------------------
// Credible intervals for the linear functional <f, psi>_{L^2} = psi' m X.
//----------------------------------------------------------------------------

struct FunctionalReport {
  Eigen::VectorXd psi;
  double estimate = 0.0;
  double radius = 0.0;        // empirical level-quantile of |<f - fbar, psi>|
  double radius_gauss = 0.0;  // closed-form cross-check: z-quantile * sd
  double sd = 0.0;            // sqrt(psi' m H^{-1} m psi)
  double level = 0.0;
  int n_draws = 0;
};

// The scalar law of <f - fbar, psi> is N(0, c' c) with c = L_u^{-1} L' m psi;
// draws are taken directly in that scalar law. Throws UsageError for
// level outside (0,1) or n_draws < 100.
FunctionalReport functional_credible(const GaussianPosterior& post,
                                     const Eigen::VectorXd& psi, const MassMatrix& mass,
                                     double level, int n_draws, std::uint64_t seed);

//----------------------------------------------------------------------------
// Frequentist coverage of the credible interval over noise replicates.
//----------------------------------------------------------------------------

struct CoverageRow {
  int replicate = 0;
  double estimate = 0.0;
  double radius = 0.0;
  double truth = 0.0;
  bool covered = false;
};

struct CoverageResult {
  double coverage = 0.0;
  double mean_radius = 0.0;
  std::vector<CoverageRow> rows;
};

// Truth source: either fresh prior draws per replicate (exact Bayesian
// calibration) or a fixed function with precomputed noiseless data.
struct CoverageTruth {
  // Fixed truth: noiseless data mean and the exact functional value
  // (fine quadrature of f0 against psi). Ignored when use_prior_draws.
  Eigen::VectorXd data_mean;
  double truth_value = 0.0;
  bool use_prior_draws = false;
};

// Replicate r uses the seeded stream (seed + r): for prior-drawn truths the
// stream first yields the truth draw, then the noise; for fixed truths only
// the noise. The posterior factor is computed once (it does not depend on
// Y). Throws UsageError if replicates < 100.
CoverageResult coverage_experiment(const RayTransformMatrix& A, const FanBeamGrid& grid,
                                   std::shared_ptr<const PriorCovariance> prior,
                                   const MassMatrix& mass, double sigma, double epsilon,
                                   const Eigen::VectorXd& psi, const CoverageTruth& truth,
                                   double level, int replicates, int n_draws,
                                   std::uint64_t seed);

//----------------------------------------------------------------------------
// Cross-sections of posterior draws along {x2 = 0}.
//----------------------------------------------------------------------------

struct CrossSection {
  Eigen::VectorXd x1;      // sample abscissae on [-1, 1]
  Eigen::MatrixXd values;  // resolution x count interpolated draws
  Eigen::VectorXd mean;
  Eigen::VectorXd q05;
  Eigen::VectorXd q95;
};

CrossSection cross_section(const Eigen::MatrixXd& draws, const TriMesh& mesh,
                           int resolution);

//----------------------------------------------------------------------------
// The Tikhonov / Onsager-Machlup objective whose minimizer is the posterior
// mean: J(X) = eps^{-2} (A X - Y)' n (A X - Y) + sigma X' Gamma^{-1} X.
//----------------------------------------------------------------------------

double map_objective(const RayTransformMatrix& A, const FanBeamGrid& grid,
                     const PriorCovariance& prior, double sigma, double epsilon,
                     const Sinogram& Y, const Eigen::VectorXd& X);

Eigen::VectorXd map_gradient(const RayTransformMatrix& A, const FanBeamGrid& grid,
                             const PriorCovariance& prior, double sigma, double epsilon,
                             const Sinogram& Y, const Eigen::VectorXd& X);

}  // namespace geotomo
