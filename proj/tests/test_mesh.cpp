#include "doctest.h"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "geotomo/common.hpp"
#include "geotomo/mesh.hpp"

using namespace geotomo;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("mesh_test_") + name;
}

TriMesh unit_triangle_mesh() {
  TriMesh mesh;
  mesh.nodes = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  mesh.triangles = {{0, 1, 2}};
  mesh.boundary = {0, 0, 0};
  mesh.finalize();
  return mesh;
}

}  // namespace

TEST_CASE("generate_disk_mesh: node budget, rings, boundary flags") {
  int rings = 0;
  const TriMesh mesh = generate_disk_mesh(886, &rings);
  CHECK(mesh.num_nodes() >= 709);   // within 20% of the target
  CHECK(mesh.num_nodes() <= 1063);
  CHECK(rings >= 3);

  int boundary_count = 0;
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    const double r = mesh.nodes[j].norm();
    CHECK(r <= 1.0 + 1e-12);
    if (mesh.boundary[j]) {
      ++boundary_count;
      CHECK(std::abs(r - 1.0) <= 1e-10);
    }
  }
  CHECK(boundary_count >= 3);
  CHECK(mesh.polygon_area() >= 0.99 * kPi);
  CHECK(mesh.polygon_area() <= kPi);
}

TEST_CASE("generate_disk_mesh: minimum target enforced") {
  CHECK_NOTHROW(generate_disk_mesh(16));
  CHECK_THROWS_AS(generate_disk_mesh(15), UsageError);
}

TEST_CASE("mesh area converges to the disk area") {
  const TriMesh mesh = generate_disk_mesh(6027);
  CHECK(std::abs(mesh.polygon_area() - kPi) / kPi <= 1e-3);
}

TEST_CASE("save/load round-trips bit-exactly") {
  const TriMesh mesh = generate_disk_mesh(150);
  const std::string path = temp_path("roundtrip.txt");
  save_mesh(mesh, path);
  const TriMesh back = load_mesh(path);
  REQUIRE(back.num_nodes() == mesh.num_nodes());
  REQUIRE(back.num_triangles() == mesh.num_triangles());
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    CHECK(back.nodes[j].x == mesh.nodes[j].x);
    CHECK(back.nodes[j].y == mesh.nodes[j].y);
    CHECK(back.boundary[j] == mesh.boundary[j]);
  }
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    CHECK(back.triangles[k] == mesh.triangles[k]);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_mesh rejects malformed content") {
  const std::string path = temp_path("bad.txt");

  {  // node outside the disk
    std::ofstream out(path);
    out << "3 1\n1.5 0 0\n0 1 1\n-1 0 1\n0 1 2\n";
  }
  CHECK_THROWS_AS(load_mesh(path), IoError);

  {  // repeated triangle -> repeated directed edges
    std::ofstream out(path);
    out << "3 2\n0 0 0\n1 0 1\n0 1 1\n0 1 2\n0 1 2\n";
  }
  CHECK_THROWS_AS(load_mesh(path), IoError);

  {  // truncated: header promises more nodes than present
    std::ofstream out(path);
    out << "4 1\n0 0 0\n1 0 1\n";
  }
  CHECK_THROWS_AS(load_mesh(path), IoError);

  CHECK_THROWS_AS(load_mesh("no_such_file_anywhere.txt"), IoError);
  std::remove(path.c_str());
}

TEST_CASE("locate: nodes, centroids, and points outside") {
  const TriMesh mesh = generate_disk_mesh(300);

  // Centroid of each of a few triangles lands in that triangle (or an
  // exact-tie neighbor sharing the point).
  for (int k = 0; k < mesh.num_triangles(); k += 17) {
    const auto& tri = mesh.triangles[k];
    const Vec2 c = (mesh.nodes[tri[0]] + mesh.nodes[tri[1]] + mesh.nodes[tri[2]]) * (1.0 / 3.0);
    const auto hit = mesh.locate(c);
    REQUIRE(hit.has_value());
    const auto& found = mesh.triangles[hit->tri];
    double sum = 0.0;
    Vec2 rec{0.0, 0.0};
    for (int a = 0; a < 3; ++a) {
      sum += hit->w[a];
      rec += hit->w[a] * mesh.nodes[found[a]];
      CHECK(hit->w[a] >= -1e-12);
      CHECK(hit->w[a] <= 1.0 + 1e-12);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((rec - c).norm() <= 1e-12);
  }

  // A node: some containing triangle with weight ~1 on that node.
  const int j = mesh.num_nodes() / 2;
  const auto hit = mesh.locate(mesh.nodes[j]);
  REQUIRE(hit.has_value());
  double wj = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (mesh.triangles[hit->tri][a] == j) wj = hit->w[a];
  }
  CHECK(wj == doctest::Approx(1.0).epsilon(1e-9));

  CHECK(!mesh.locate({2.0, 0.0}).has_value());
  CHECK(!mesh.locate({0.9, 0.9}).has_value());
}

TEST_CASE("boundary sliver: locate misses, shape_clamped projects onto the hull") {
  const TriMesh mesh = generate_disk_mesh(300);

  // Midpoint of a hull edge pushed radially toward the circle sits in the
  // sliver between the polygon and the disk.
  int a = -1, b = -1;
  for (int j = 0; j < mesh.num_nodes() && a < 0; ++j) {
    if (mesh.boundary[j]) a = j;
  }
  REQUIRE(a >= 0);
  // find a hull neighbor: boundary node minimizing angle distance
  double best = 1e300;
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    if (j == a || !mesh.boundary[j]) continue;
    const double d = (mesh.nodes[j] - mesh.nodes[a]).norm();
    if (d < best) {
      best = d;
      b = j;
    }
  }
  REQUIRE(b >= 0);
  const Vec2 mid = (mesh.nodes[a] + mesh.nodes[b]) * 0.5;
  const double rmid = mid.norm();
  REQUIRE(rmid < 1.0);
  const Vec2 sliver = mid * (0.5 * (1.0 + rmid) / rmid);  // between hull and circle

  CHECK(!mesh.locate(sliver).has_value());
  const auto eval = mesh.shape_clamped(sliver);
  REQUIRE(eval.has_value());
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (eval->nodes[k] >= 0) {
      CHECK(mesh.boundary[eval->nodes[k]]);
      CHECK(eval->w[k] >= -1e-12);
      sum += eval->w[k];
    }
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));

  CHECK(!mesh.shape_clamped({1.5, 0.0}).has_value());

  // Inside the polygon shape_clamped agrees with locate.
  const auto inner = mesh.shape_clamped({0.2, 0.1});
  REQUIRE(inner.has_value());
  double isum = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (inner->nodes[k] >= 0) isum += inner->w[k];
  }
  CHECK(isum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("interp: partition of unity, nodal delta, linear reproduction") {
  const TriMesh mesh = generate_disk_mesh(300);
  const int m = mesh.num_nodes();

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd lin(m);
  for (int j = 0; j < m; ++j) {
    lin[j] = 0.3 + 1.7 * mesh.nodes[j].x - 0.9 * mesh.nodes[j].y;
  }

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const double r = 0.95 * std::sqrt(rng.uniform());
    const double th = 2 * kPi * rng.uniform();
    const Vec2 p{r * std::cos(th), r * std::sin(th)};
    if (!mesh.locate(p)) continue;
    CHECK(interp(mesh, ones, p) == doctest::Approx(1.0).epsilon(1e-12));
    const double want = 0.3 + 1.7 * p.x - 0.9 * p.y;
    CHECK(interp(mesh, lin, p) == doctest::Approx(want).epsilon(1e-11));
  }

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(m);
  const int j = m / 3;
  delta[j] = 1.0;
  CHECK(interp(mesh, delta, mesh.nodes[j]) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(interp(mesh, delta, mesh.nodes[(j + 7) % m])) <= 1e-9);

  // Extension by zero outside the polygon.
  CHECK(interp(mesh, ones, {2.0, 0.0}) == 0.0);

  CHECK_THROWS_AS(interp(mesh, Eigen::VectorXd::Zero(m + 1), {0.0, 0.0}), UsageError);
}

TEST_CASE("mass matrix: exact entries on a single unit triangle") {
  const TriMesh mesh = unit_triangle_mesh();
  const MassMatrix mass = mass_matrix(mesh);
  const Eigen::MatrixXd M = Eigen::MatrixXd(mass.mat());
  REQUIRE(M.rows() == 3);
  // Area S = 1/2; local block S/12 (1 + delta_ij)
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double want = (i == j) ? 1.0 / 12.0 : 1.0 / 24.0;
      CHECK(M(i, j) == doctest::Approx(want).epsilon(1e-14));
    }
  }
  CHECK(mass.total() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("mass matrix: total mass equals polygon area, SPD, exact solve") {
  const TriMesh mesh = generate_disk_mesh(200);
  const MassMatrix mass = mass_matrix(mesh);
  const int m = mesh.num_nodes();

  CHECK(mass.total() == doctest::Approx(mesh.polygon_area()).epsilon(1e-12));

  const Eigen::MatrixXd M = Eigen::MatrixXd(mass.mat());
  CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);

  Rng rng(11);
  Eigen::VectorXd w(m);
  for (int j = 0; j < m; ++j) w[j] = rng.gauss();
  const Eigen::VectorXd rhs = mass.mat() * w;
  CHECK((mass.solve(rhs) - w).norm() <= 1e-10 * w.norm());
}

TEST_CASE("mass matrix: quadratic form matches midpoint quadrature") {
  // The edge-midpoint rule is exact for quadratics, so u' M v must equal
  // the per-triangle quadrature of the product of the P1 interpolants.
  const TriMesh mesh = generate_disk_mesh(120);
  const MassMatrix mass = mass_matrix(mesh);
  const int m = mesh.num_nodes();
  Rng rng(13);
  Eigen::VectorXd u(m), v(m);
  for (int j = 0; j < m; ++j) {
    u[j] = rng.gauss();
    v[j] = rng.gauss();
  }

  double quad = 0.0;
  for (const auto& tri : mesh.triangles) {
    const Vec2 a = mesh.nodes[tri[0]], b = mesh.nodes[tri[1]], c = mesh.nodes[tri[2]];
    const double S = 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    // values of the interpolants at edge midpoints
    const double um[3] = {0.5 * (u[tri[0]] + u[tri[1]]), 0.5 * (u[tri[1]] + u[tri[2]]),
                          0.5 * (u[tri[2]] + u[tri[0]])};
    const double vm[3] = {0.5 * (v[tri[0]] + v[tri[1]]), 0.5 * (v[tri[1]] + v[tri[2]]),
                          0.5 * (v[tri[2]] + v[tri[0]])};
    quad += S / 3.0 * (um[0] * vm[0] + um[1] * vm[1] + um[2] * vm[2]);
  }

  const double bilinear = u.dot(mass.mat() * v);
  CHECK(bilinear == doctest::Approx(quad).epsilon(1e-12));
}

TEST_CASE("finalize rejects broken meshes") {
  {  // too few nodes
    TriMesh mesh;
    mesh.nodes = {{0, 0}, {1, 0}};
    mesh.boundary = {0, 0};
    CHECK_THROWS_AS(mesh.finalize(), NumericError);
  }
  {  // boundary flag count mismatch
    TriMesh mesh;
    mesh.nodes = {{0, 0}, {1, 0}, {0, 1}};
    mesh.triangles = {{0, 1, 2}};
    mesh.boundary = {0, 0};
    CHECK_THROWS_AS(mesh.finalize(), NumericError);
  }
  {  // clockwise (negative area) triangle
    TriMesh mesh;
    mesh.nodes = {{0, 0}, {1, 0}, {0, 1}};
    mesh.triangles = {{0, 2, 1}};
    mesh.boundary = {0, 0, 0};
    CHECK_THROWS_AS(mesh.finalize(), NumericError);
  }
  {  // boundary-flagged node off the circle
    TriMesh mesh;
    mesh.nodes = {{0, 0}, {1, 0}, {0, 1}};
    mesh.triangles = {{0, 1, 2}};
    mesh.boundary = {1, 0, 0};
    CHECK_THROWS_AS(mesh.finalize(), NumericError);
  }
  {  // coincident nodes
    TriMesh mesh;
    mesh.nodes = {{0, 0}, {1, 0}, {0, 1}, {1, 0}};
    mesh.triangles = {{0, 1, 2}, {0, 3, 2}};
    mesh.boundary = {0, 0, 0, 0};
    CHECK_THROWS_AS(mesh.finalize(), NumericError);
  }
}
