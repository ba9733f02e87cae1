#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "geotomo/common.hpp"
#include "geotomo/mesh.hpp"
#include "geotomo/prior.hpp"

using namespace geotomo;

namespace {

// Interior-only point cloud (no boundary nodes) packaged as a mesh for the
// covariance assembler, which only reads node positions.
TriMesh interior_cloud(int count, double max_r) {
  TriMesh mesh;
  Rng rng(77);
  for (int j = 0; j < count; ++j) {
    const double r = max_r * std::sqrt(rng.uniform());
    const double th = 2.0 * kPi * rng.uniform();
    mesh.nodes.push_back({r * std::cos(th), r * std::sin(th)});
  }
  mesh.boundary.assign(count, 0);
  return mesh;
}

}  // namespace

TEST_CASE("matern_kernel: unit value at zero and closed half-integer forms") {
  for (double nu : {0.5, 1.5, 2.5, 0.7, 3.2}) {
    MaternParams p{nu, 0.2, 1.0};
    CHECK(matern_kernel(p, 0.0) == 1.0);
  }

  // nu = 1/2 is the exponential kernel.
  MaternParams p05{0.5, 0.3, 1.0};
  for (double r : {0.01, 0.1, 0.5, 2.0}) {
    CHECK(matern_kernel(p05, r) == doctest::Approx(std::exp(-r / 0.3)).epsilon(1e-15));
  }

  // nu = 3/2 at r = ell: (1 + sqrt(3)) exp(-sqrt(3))
  MaternParams p15{1.5, 0.2, 1.0};
  const double s3 = std::sqrt(3.0);
  CHECK(matern_kernel(p15, 0.2) == doctest::Approx((1 + s3) * std::exp(-s3)).epsilon(1e-14));
  CHECK(std::abs(matern_kernel(p15, 0.2) - 0.48335) <= 1e-5);
}

TEST_CASE("matern_kernel: closed forms agree with the Bessel route") {
  // Evaluate the general formula directly through std::cyl_bessel_k and
  // compare against the specialized half-integer branches.
  auto bessel_route = [](double nu, double ell, double r) {
    const double u = std::sqrt(2.0 * nu) * r / ell;
    return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(u, nu) *
           std::cyl_bessel_k(nu, u);
  };
  for (double nu : {0.5, 1.5, 2.5}) {
    MaternParams p{nu, 0.25, 1.0};
    for (double r : {0.05, 0.2, 0.6, 1.5}) {
      CHECK(matern_kernel(p, r) == doctest::Approx(bessel_route(nu, 0.25, r)).epsilon(1e-10));
    }
  }
}

TEST_CASE("matern_kernel: non-increasing in distance") {
  for (double nu : {0.5, 1.5, 2.5, 0.9}) {
    MaternParams p{nu, 0.2, 1.0};
    double prev = matern_kernel(p, 0.0);
    for (int i = 1; i <= 100; ++i) {
      const double cur = matern_kernel(p, i * 0.01);
      CHECK(cur <= prev + 1e-15);
      CHECK(cur >= 0.0);
      prev = cur;
    }
  }
}

TEST_CASE("matern_kernel: parameter validation") {
  CHECK_THROWS_AS(matern_kernel({1.5, 0.2, 1.0}, -0.1), UsageError);
  CHECK_THROWS_AS(matern_kernel({0.0, 0.2, 1.0}, 0.1), UsageError);
  CHECK_THROWS_AS(matern_kernel({1.5, 0.0, 1.0}, 0.1), UsageError);
  CHECK_THROWS_AS(matern_kernel({1.5, 0.2, -1.0}, 0.1), UsageError);
}

TEST_CASE("assemble_prior_cov: unit diagonal, symmetry, factor consistency") {
  const TriMesh mesh = generate_disk_mesh(60);
  const PriorCovariance cov = assemble_prior_cov(mesh, {1.5, 0.2, 1.0});
  const int m = cov.size();
  REQUIRE(m == mesh.num_nodes());

  for (int j = 0; j < m; ++j) CHECK(cov.gamma(j, j) == 1.0);
  CHECK((cov.gamma - cov.gamma.transpose()).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd target = cov.gamma;
  target.diagonal().array() += cov.jitter;
  const Eigen::MatrixXd rebuilt =
      Eigen::MatrixXd(cov.L.triangularView<Eigen::Lower>()) *
      Eigen::MatrixXd(cov.L.triangularView<Eigen::Lower>()).transpose();
  CHECK((rebuilt - target).norm() <= 1e-10 * cov.gamma.norm());

  CHECK(cov.jitter > 0.0);
  CHECK(cov.jitter <= 1e-6);

  // solve() inverts the jittered covariance.
  Rng rng(3);
  Eigen::VectorXd v(m);
  for (int j = 0; j < m; ++j) v[j] = rng.gauss();
  CHECK((target * cov.solve(v) - v).norm() <= 1e-8 * v.norm());
}

TEST_CASE("assemble_prior_cov accepts a bare point cloud") {
  const TriMesh cloud = interior_cloud(40, 0.8);
  const PriorCovariance cov = assemble_prior_cov(cloud, {2.5, 0.3, 2.0});
  CHECK(cov.size() == 40);
  CHECK(cov.gamma(0, 0) == 1.0);
}

TEST_CASE("dm_eval: boundary distance surrogate") {
  CHECK(dm_eval({0.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dm_eval({1.0, 0.0}) == 0.0);
  CHECK(dm_eval({0.6, 0.0}) == doctest::Approx(0.32).epsilon(1e-15));
  CHECK_THROWS_AS(dm_eval({1.1, 0.0}), UsageError);
}

TEST_CASE("prior_draw: sigma scales amplitude, seeds reproduce") {
  const TriMesh cloud = interior_cloud(30, 0.9);
  const PriorCovariance c1 = assemble_prior_cov(cloud, {1.5, 0.2, 1.0});
  const PriorCovariance c4 = assemble_prior_cov(cloud, {1.5, 0.2, 4.0});

  Rng r1(5), r4(5);
  const Eigen::VectorXd d1 = prior_draw(c1, r1);
  const Eigen::VectorXd d4 = prior_draw(c4, r4);
  CHECK((d4 - 0.5 * d1).cwiseAbs().maxCoeff() <= 1e-14);

  Rng ra(9), rb(9);
  CHECK((prior_draw(c1, ra) - prior_draw(c1, rb)).norm() == 0.0);
}

TEST_CASE("weighted_prior_draw: boundary meshes rejected, weighting exact") {
  const TriMesh disk = generate_disk_mesh(60);
  const PriorCovariance cov_disk = assemble_prior_cov(disk, {1.5, 0.2, 1.0});
  CHECK_THROWS_AS(weighted_prior_draw(cov_disk, disk, 1), UsageError);

  const TriMesh cloud = interior_cloud(30, 0.9);
  const PriorCovariance cov = assemble_prior_cov(cloud, {1.5, 0.2, 1.0});
  const Eigen::VectorXd f = weighted_prior_draw(cov, cloud, 123);
  Rng rng(123);
  const Eigen::VectorXd h = prior_draw(cov, rng);
  for (int j = 0; j < 30; ++j) {
    const double dm = dm_eval(cloud.nodes[j]);
    CHECK(f[j] * std::sqrt(dm) == doctest::Approx(h[j]).epsilon(1e-13));
  }
}

TEST_CASE("prior_draw: sample moments match the covariance") {
  const TriMesh cloud = interior_cloud(50, 0.85);
  const double sigma = 2.0;
  const PriorCovariance cov = assemble_prior_cov(cloud, {1.5, 0.25, sigma});
  const int m = cov.size();
  const int draws = 10000;

  Rng rng(31);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(m);
  double cov01 = 0.0, cov0h = 0.0;
  for (int d = 0; d < draws; ++d) {
    const Eigen::VectorXd x = prior_draw(cov, rng);
    mean += x;
    var += x.cwiseProduct(x);
    cov01 += x[0] * x[1];
    cov0h += x[0] * x[m / 2];
  }
  mean /= draws;
  var = var / draws - mean.cwiseProduct(mean);
  cov01 = cov01 / draws - mean[0] * mean[1];
  cov0h = cov0h / draws - mean[0] * mean[m / 2];

  // Node variances: Gamma_jj / sigma = 1/sigma (plus invisible jitter).
  double avg = 0.0;
  for (int j = 0; j < m; ++j) avg += var[j] * sigma;
  avg /= m;
  CHECK(std::abs(avg - 1.0) <= 0.05);

  // Entrywise covariances within 5 standard errors of the Monte Carlo.
  auto se = [&](double rho) { return std::sqrt((1.0 + rho * rho) / draws) / sigma; };
  const double want01 = cov.gamma(0, 1) / sigma;
  const double want0h = cov.gamma(0, m / 2) / sigma;
  CHECK(std::abs(cov01 - want01) <= 5.0 * se(cov.gamma(0, 1)));
  CHECK(std::abs(cov0h - want0h) <= 5.0 * se(cov.gamma(0, m / 2)));
}
