#include "geotomo/prior.hpp"

#include <cmath>

namespace geotomo {

namespace {

void check_params(const MaternParams& p) {
  if (!(p.nu > 0.0 && p.ell > 0.0 && p.sigma > 0.0)) {
    throw UsageError("matern: nu, ell, sigma must all be positive");
  }
}

bool near(double a, double b) { return std::abs(a - b) < 1e-12; }

}  // namespace

double matern_kernel(const MaternParams& params, double r) {
  check_params(params);
  if (r < 0.0) throw UsageError("matern_kernel: negative distance");
  if (r == 0.0) return 1.0;

  const double s = r / params.ell;
  if (near(params.nu, 0.5)) {
    return std::exp(-s);
  }
  if (near(params.nu, 1.5)) {
    const double u = std::sqrt(3.0) * s;
    return (1.0 + u) * std::exp(-u);
  }
  if (near(params.nu, 2.5)) {
    const double u = std::sqrt(5.0) * s;
    return (1.0 + u + u * u / 3.0) * std::exp(-u);
  }
  const double nu = params.nu;
  const double u = std::sqrt(2.0 * nu) * s;
  const double k = std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(u, nu) *
                   std::cyl_bessel_k(nu, u);
  // Guard underflow at large distance: the kernel decays to 0.
  return std::isfinite(k) ? std::min(k, 1.0) : 0.0;
}

Eigen::VectorXd PriorCovariance::solve(const Eigen::VectorXd& v) const {
  Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(v);
  return L.triangularView<Eigen::Lower>().transpose().solve(w);
}

PriorCovariance assemble_prior_cov(const TriMesh& mesh, const MaternParams& params) {
  check_params(params);
  const int m = mesh.num_nodes();
  PriorCovariance cov;
  cov.params = params;
  cov.gamma.resize(m, m);

  parallel_for(m, [&](std::int64_t i) {
    for (int j = 0; j <= i; ++j) {
      const double k = matern_kernel(params, (mesh.nodes[i] - mesh.nodes[j]).norm());
      cov.gamma(i, j) = k;
      cov.gamma(j, i) = k;
    }
  });

  const double mean_diag = cov.gamma.trace() / m;  // = 1 for this kernel
  double jitter = 1e-10 * mean_diag;
  const double cap = 1e-6;
  for (;;) {
    Eigen::MatrixXd work = cov.gamma;
    work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(work);  // factors in place
    if (llt.info() == Eigen::Success) {
      cov.jitter = jitter;
      cov.L = work.triangularView<Eigen::Lower>();
      return cov;
    }
    if (jitter >= cap) {
      throw NumericError("assemble_prior_cov: factorization failed at maximum jitter");
    }
    jitter = std::min(jitter * 10.0, cap);
  }
}

double dm_eval(Vec2 x) {
  const double r2 = x.norm2();
  if (r2 > 1.0 + 1e-12) throw UsageError("dm_eval: point outside the closed disk");
  return std::max(0.0, 0.5 * (1.0 - r2));
}

Eigen::VectorXd prior_draw(const PriorCovariance& cov, Rng& rng) {
  const int m = cov.size();
  Eigen::VectorXd z(m);
  for (int j = 0; j < m; ++j) z[j] = rng.gauss();
  return (cov.L.triangularView<Eigen::Lower>() * z) / std::sqrt(cov.params.sigma);
}

Eigen::VectorXd weighted_prior_draw(const PriorCovariance& cov, const TriMesh& mesh,
                                    std::uint64_t seed) {
  if (cov.size() != mesh.num_nodes()) {
    throw UsageError("weighted_prior_draw: covariance/mesh size mismatch");
  }
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    if (mesh.boundary[j] || dm_eval(mesh.nodes[j]) <= 0.0) {
      throw UsageError(
          "weighted_prior_draw: mesh has boundary nodes (d_M = 0); "
          "exclude them or reconstruct h against the weighted operator");
    }
  }
  Rng rng(seed);
  Eigen::VectorXd f = prior_draw(cov, rng);
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    f[j] /= std::sqrt(dm_eval(mesh.nodes[j]));
  }
  return f;
}

}  // namespace geotomo
