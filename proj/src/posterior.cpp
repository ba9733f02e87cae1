#include "geotomo/posterior.hpp"

#include <cmath>

namespace geotomo {

namespace {

using Eigen::Lower;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// eps^{-2} A' (n . (A v)) + sigma (Gamma + jitter I)^{-1} v
VectorXd apply_precision(const RayTransformMatrix& A, const FanBeamGrid& grid,
                         const PriorCovariance& prior, double sigma, double epsilon,
                         const VectorXd& v) {
  const VectorXd proj = grid.weights.cwiseProduct(A.entries * v);
  return (A.entries.transpose() * proj) / (epsilon * epsilon) + sigma * prior.solve(v);
}

}  // namespace

Eigen::VectorXd GaussianPosterior::solve_precision(const Eigen::VectorXd& v) const {
  const auto& L = prior->L;
  VectorXd t = L.triangularView<Lower>().transpose() * v;
  t = Lu.triangularView<Lower>().solve(t);
  t = Lu.triangularView<Lower>().transpose().solve(t);
  return L.triangularView<Lower>() * t;
}

GaussianPosterior compute_posterior(const RayTransformMatrix& A, const FanBeamGrid& grid,
                                    std::shared_ptr<const PriorCovariance> prior,
                                    double sigma, double epsilon, const Sinogram& Y) {
  if (!(epsilon > 0.0)) throw UsageError("compute_posterior: epsilon must be > 0");
  if (!(sigma > 0.0)) throw UsageError("compute_posterior: sigma must be > 0");
  if (!prior) throw UsageError("compute_posterior: missing prior");
  const int n = A.rows();
  const int m = A.cols();
  if (grid.size() != n || prior->size() != m || Y.values.size() != n) {
    throw UsageError("compute_posterior: dimension mismatch");
  }

  GaussianPosterior post;
  post.prior = prior;
  post.epsilon = epsilon;
  post.sigma = sigma;
  post.n_rays = n;
  post.mesh_nodes = m;
  post.variant = A.variant;

  const double inv_eps2 = 1.0 / (epsilon * epsilon);
  const auto& L = prior->L;

  // Whitened precision H_u = eps^{-2} (A L)' n (A L) + sigma I, accumulated
  // by blocked symmetric rank updates. Column i of (A L)' is L' a_i, built
  // from the sparse row a_i by axpys over columns of U = L' (so the hot loop
  // walks contiguous memory).
  MatrixXd Hu = MatrixXd::Zero(m, m);
  {
    const MatrixXd U = L.transpose();
    const int block = 512;
    MatrixXd cols(m, std::min(block, n));
    for (int i0 = 0; i0 < n; i0 += block) {
      const int cnt = std::min(block, n - i0);
      cols.setZero(m, cnt);
      parallel_for(cnt, [&](std::int64_t c) {
        const int i = i0 + static_cast<int>(c);
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A.entries, i);
             it; ++it) {
          const int j = static_cast<int>(it.col());
          cols.col(c).head(j + 1) += it.value() * U.col(j).head(j + 1);
        }
        cols.col(c) *= std::sqrt(inv_eps2 * grid.weights[i]);
      });
      Hu.selfadjointView<Lower>().rankUpdate(cols.leftCols(cnt), 1.0);
    }
    Hu.diagonal().array() += sigma;
  }

  {
    Eigen::LLT<Eigen::Ref<MatrixXd>> llt(Hu);  // factors in place
    if (llt.info() != Eigen::Success) {
      throw NumericError("compute_posterior: whitened precision failed to factor");
    }
  }
  post.Lu = std::move(Hu);

  // Mean solve with one step of iterative refinement.
  const VectorXd b = inv_eps2 * (A.entries.transpose() * grid.weights.cwiseProduct(Y.values));
  post.mean = post.solve_precision(b);
  const VectorXd r1 = b - apply_precision(A, grid, *prior, sigma, epsilon, post.mean);
  post.mean += post.solve_precision(r1);

  const double bnorm = b.norm();
  if (bnorm > 0.0) {
    const VectorXd r2 = b - apply_precision(A, grid, *prior, sigma, epsilon, post.mean);
    post.residual = r2.norm() / bnorm;
  }
  return post;
}

Eigen::MatrixXd sample_posterior(const GaussianPosterior& post, int count,
                                 std::uint64_t seed) {
  if (count < 1) throw UsageError("sample_posterior: count must be >= 1");
  const int m = static_cast<int>(post.mean.size());
  Rng rng(seed);
  MatrixXd Z(m, count);
  for (int c = 0; c < count; ++c) {
    for (int j = 0; j < m; ++j) Z(j, c) = rng.gauss();
  }
  post.Lu.triangularView<Lower>().transpose().solveInPlace(Z);
  MatrixXd draws = post.prior->L.triangularView<Lower>() * Z;
  draws.colwise() += post.mean;
  return draws.transpose();
}

FunctionalReport functional_credible(const GaussianPosterior& post,
                                     const Eigen::VectorXd& psi, const MassMatrix& mass,
                                     double level, int n_draws, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0)) {
    throw UsageError("functional_credible: level must be in (0, 1)");
  }
  if (n_draws < 100) throw UsageError("functional_credible: n_draws must be >= 100");
  const int m = static_cast<int>(post.mean.size());
  if (psi.size() != m || mass.size() != m) {
    throw UsageError("functional_credible: dimension mismatch");
  }

  FunctionalReport report;
  report.psi = psi;
  report.level = level;
  report.n_draws = n_draws;

  const VectorXd w = mass.mat() * psi;
  report.estimate = post.mean.dot(w);

  // <f - fbar, psi> = c' z with c = L_u^{-1} (L' w): scalar Gaussian law.
  VectorXd c = post.prior->L.triangularView<Lower>().transpose() * w;
  c = post.Lu.triangularView<Lower>().solve(c);
  report.sd = c.norm();
  report.radius_gauss = report.sd * normal_quantile(0.5 * (1.0 + level));

  Rng rng(seed);
  std::vector<double> deviations(n_draws);
  for (int d = 0; d < n_draws; ++d) {
    double val = 0.0;
    for (int j = 0; j < m; ++j) val += c[j] * rng.gauss();
    deviations[d] = std::abs(val);
  }
  report.radius = quantile(std::move(deviations), level);
  return report;
}

CoverageResult coverage_experiment(const RayTransformMatrix& A, const FanBeamGrid& grid,
                                   std::shared_ptr<const PriorCovariance> prior,
                                   const MassMatrix& mass, double sigma, double epsilon,
                                   const Eigen::VectorXd& psi, const CoverageTruth& truth,
                                   double level, int replicates, int n_draws,
                                   std::uint64_t seed) {
  if (replicates < 100) throw UsageError("coverage_experiment: replicates must be >= 100");
  if (n_draws < 100) throw UsageError("coverage_experiment: n_draws must be >= 100");
  if (!(level > 0.0 && level < 1.0)) {
    throw UsageError("coverage_experiment: level must be in (0, 1)");
  }
  const int n = A.rows();
  const int m = A.cols();
  if (!truth.use_prior_draws && truth.data_mean.size() != n) {
    throw UsageError("coverage_experiment: data mean length mismatch");
  }
  if (psi.size() != m) throw UsageError("coverage_experiment: psi length mismatch");

  // The posterior factor does not depend on Y: compute it once with zero
  // data, then reuse the triangular factors for every replicate.
  Sinogram zero;
  zero.values = VectorXd::Zero(n);
  const GaussianPosterior factor =
      compute_posterior(A, grid, prior, sigma, epsilon, zero);

  const VectorXd w = mass.mat() * psi;
  VectorXd c = prior->L.triangularView<Eigen::Lower>().transpose() * w;
  c = factor.Lu.triangularView<Eigen::Lower>().solve(c);

  const double inv_eps2 = 1.0 / (epsilon * epsilon);
  CoverageResult result;
  result.rows.resize(replicates);

  for (int rep = 0; rep < replicates; ++rep) {
    Rng rng(seed + static_cast<std::uint64_t>(rep));

    double truth_value;
    VectorXd y(n);
    if (truth.use_prior_draws) {
      const VectorXd x0 = prior_draw(*prior, rng);
      truth_value = x0.dot(w);
      y = A.entries * x0;
    } else {
      truth_value = truth.truth_value;
      y = truth.data_mean;
    }
    for (int i = 0; i < n; ++i) {
      y[i] += epsilon * rng.gauss() / std::sqrt(grid.weights[i]);
    }

    const VectorXd b = inv_eps2 * (A.entries.transpose() * grid.weights.cwiseProduct(y));
    const VectorXd mean = factor.solve_precision(b);
    const double estimate = mean.dot(w);

    std::vector<double> deviations(n_draws);
    for (int d = 0; d < n_draws; ++d) {
      double val = 0.0;
      for (int j = 0; j < m; ++j) val += c[j] * rng.gauss();
      deviations[d] = std::abs(val);
    }
    const double radius = quantile(std::move(deviations), level);

    CoverageRow row;
    row.replicate = rep;
    row.estimate = estimate;
    row.radius = radius;
    row.truth = truth_value;
    row.covered = std::abs(truth_value - estimate) <= radius;
    result.rows[rep] = row;
    result.coverage += row.covered ? 1.0 : 0.0;
    result.mean_radius += radius;
  }
  result.coverage /= replicates;
  result.mean_radius /= replicates;
  return result;
}

CrossSection cross_section(const Eigen::MatrixXd& draws, const TriMesh& mesh,
                           int resolution) {
  if (draws.rows() < 1) throw UsageError("cross_section: no draws");
  if (draws.cols() != mesh.num_nodes()) {
    throw UsageError("cross_section: draw length does not match mesh");
  }
  if (resolution < 2) throw UsageError("cross_section: resolution must be >= 2");

  const int count = static_cast<int>(draws.rows());
  CrossSection cs;
  cs.x1.resize(resolution);
  cs.values.resize(resolution, count);
  for (int p = 0; p < resolution; ++p) {
    cs.x1[p] = -1.0 + 2.0 * p / (resolution - 1);
  }
  VectorXd coeffs(mesh.num_nodes());
  for (int d = 0; d < count; ++d) {
    coeffs = draws.row(d).transpose();
    for (int p = 0; p < resolution; ++p) {
      cs.values(p, d) = interp(mesh, coeffs, {cs.x1[p], 0.0});
    }
  }
  cs.mean = cs.values.rowwise().mean();
  cs.q05.resize(resolution);
  cs.q95.resize(resolution);
  std::vector<double> row(count);
  for (int p = 0; p < resolution; ++p) {
    for (int d = 0; d < count; ++d) row[d] = cs.values(p, d);
    cs.q05[p] = quantile(row, 0.05);
    cs.q95[p] = quantile(row, 0.95);
  }
  return cs;
}

double map_objective(const RayTransformMatrix& A, const FanBeamGrid& grid,
                     const PriorCovariance& prior, double sigma, double epsilon,
                     const Sinogram& Y, const Eigen::VectorXd& X) {
  const VectorXd resid = A.entries * X - Y.values;
  const double data_term = resid.dot(grid.weights.cwiseProduct(resid));
  return data_term / (epsilon * epsilon) + sigma * X.dot(prior.solve(X));
}

Eigen::VectorXd map_gradient(const RayTransformMatrix& A, const FanBeamGrid& grid,
                             const PriorCovariance& prior, double sigma, double epsilon,
                             const Sinogram& Y, const Eigen::VectorXd& X) {
  const VectorXd resid = A.entries * X - Y.values;
  return 2.0 / (epsilon * epsilon) *
             (A.entries.transpose() * grid.weights.cwiseProduct(resid)) +
         2.0 * sigma * prior.solve(X);
}

}  // namespace geotomo
