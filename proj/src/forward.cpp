#include "geotomo/forward.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace geotomo {

FanBeamGrid build_grid(int n_beta, int n_alpha) {
  if (n_beta < 2 || n_alpha < 2) throw UsageError("build_grid: counts must be >= 2");
  FanBeamGrid grid;
  grid.n_beta = n_beta;
  grid.n_alpha = n_alpha;
  grid.coords.reserve(static_cast<std::size_t>(n_beta) * n_alpha);
  grid.weights.resize(grid.size());
  const double wscale = 2.0 * kPi * kPi / (static_cast<double>(n_beta) * n_alpha);
  int i = 0;
  for (int ib = 0; ib < n_beta; ++ib) {
    const double beta = (ib + 0.5) * 2.0 * kPi / n_beta;
    for (int ia = 0; ia < n_alpha; ++ia, ++i) {
      const double alpha = -kPi / 2.0 + (ia + 0.5) * kPi / n_alpha;
      grid.coords.push_back({beta, alpha});
      grid.weights[i] = wscale * std::cos(alpha);
    }
  }
  return grid;
}

std::string variant_name(TransformVariant v) {
  switch (v) {
    case TransformVariant::Plain: return "plain";
    case TransformVariant::Attenuated: return "attenuated";
    case TransformVariant::BoundaryWeighted: return "weighted";
  }
  return "plain";
}

namespace {

// Position at arclength t by linear interpolation between path samples
// (uniform spacing h except the final partial step).
// Cubic Hermite between stored samples (positions and velocities). Fourth
// order keeps the relative error of the boundary defect bounded even right
// next to the endpoints, where the defect itself is quadratically small.
inline Vec2 path_point(const GeodesicPath& path, double h, double t) {
  const auto& s = path.samples;
  const std::size_t last = s.size() - 1;
  std::size_t k = std::min(static_cast<std::size_t>(t / h), last - 1);
  while (k + 1 < last && t > s[k + 1].t) ++k;  // guards float rounding at the tail
  const double dt = s[k + 1].t - s[k].t;
  if (dt <= 0.0) return s[k].x;
  const double w = (t - s[k].t) / dt;
  const double w2 = w * w, w3 = w2 * w;
  const double h00 = 2.0 * w3 - 3.0 * w2 + 1.0;
  const double h10 = w3 - 2.0 * w2 + w;
  const double h01 = -2.0 * w3 + 3.0 * w2;
  const double h11 = w3 - w2;
  return h00 * s[k].x + (h10 * dt) * s[k].v + h01 * s[k + 1].x +
         (h11 * dt) * s[k + 1].v;
}

// One assembled row: shape-function quadrature accumulated into a dense
// scratch column with a touched-index list (rays meet O(sqrt m) supports).
struct RowScratch {
  std::vector<double> value;
  std::vector<int> touched;

  void init(int m) {
    if (static_cast<int>(value.size()) != m) value.assign(m, 0.0);
  }
  void add(const ShapeEval& se, double w) {
    for (int e = 0; e < 3; ++e) {
      const int j = se.nodes[e];
      if (j < 0) continue;
      if (value[j] == 0.0) touched.push_back(j);
      value[j] += w * se.w[e];
    }
  }
  void drain(std::vector<std::pair<int, double>>& row) {
    row.clear();
    row.reserve(touched.size());
    for (int j : touched) {
      if (value[j] != 0.0) row.emplace_back(j, value[j]);
      value[j] = 0.0;
    }
    touched.clear();
    std::sort(row.begin(), row.end());
  }
};

RayTransformMatrix assemble_core(const TriMesh& mesh, const FanBeamGrid& grid,
                                 const ConformalMetric& metric, double quad_step,
                                 TransformVariant variant,
                                 const Eigen::VectorXd* a_coeffs) {
  if (!(quad_step > 0.0 && quad_step <= 0.1)) {
    throw UsageError("assemble: quad_step must be in (0, 0.1]");
  }
  if (a_coeffs && a_coeffs->size() != mesh.num_nodes()) {
    throw UsageError("assemble: attenuation coefficient length mismatch");
  }

  const int n = grid.size();
  const int m = mesh.num_nodes();
  std::vector<std::vector<std::pair<int, double>>> rows(n);

  parallel_for(n, [&](std::int64_t i) {
    thread_local RowScratch scratch;
    scratch.init(m);
    const GeodesicPath path = geodesic_trace(metric, grid.coords[i], quad_step);
    const auto& s = path.samples;
    const std::size_t count = s.size();

    if (variant == TransformVariant::BoundaryWeighted) {
      // Midpoint rule in theta after t = (tau/2)(1 - cos theta).
      const double tau = path.tau;
      const int ntheta = std::max<int>(2, static_cast<int>(std::ceil(tau / quad_step)));
      const double dtheta = kPi / ntheta;
      for (int q = 0; q < ntheta; ++q) {
        const double theta = (q + 0.5) * dtheta;
        const double t = 0.5 * tau * (1.0 - std::cos(theta));
        const Vec2 x = path_point(path, quad_step, t);
        const double dm = 0.5 * (1.0 - x.norm2());
        if (!(dm > 0.0)) continue;  // endpoint roundoff only
        const double w = dtheta * 0.5 * tau * std::sin(theta) / std::sqrt(dm);
        if (const auto se = mesh.shape_clamped(x)) scratch.add(*se, w);
      }
    } else {
      // Composite trapezoid over the path samples; spacing is uniform except
      // the final partial step, so weights come from neighbor gaps.
      double atten = 0.0;   // running trapezoid of a along the path
      double a_prev = 0.0;  // a at the previous sample
      for (std::size_t k = 0; k < count; ++k) {
        const double t_prev = k > 0 ? s[k - 1].t : s[k].t;
        const double t_next = k + 1 < count ? s[k + 1].t : s[k].t;
        double w = 0.5 * (t_next - t_prev);
        const auto se = mesh.shape_clamped(s[k].x);
        if (variant == TransformVariant::Attenuated) {
          double a_here = 0.0;
          if (se) {
            for (int e = 0; e < 3; ++e) {
              if (se->nodes[e] >= 0) a_here += se->w[e] * (*a_coeffs)[se->nodes[e]];
            }
          }
          if (k > 0) atten += 0.5 * (s[k].t - s[k - 1].t) * (a_prev + a_here);
          a_prev = a_here;
          w *= std::exp(atten);
        }
        if (se) scratch.add(*se, w);
      }
    }
    scratch.drain(rows[i]);
  });

  std::size_t nnz = 0;
  for (const auto& row : rows) nnz += row.size();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (int i = 0; i < n; ++i) {
    for (const auto& [j, v] : rows[i]) trips.emplace_back(i, j, v);
  }

  RayTransformMatrix A;
  A.entries.resize(n, m);
  A.entries.setFromTriplets(trips.begin(), trips.end());
  A.variant = variant;
  A.metric_kind = metric.kind();
  A.quad_step = quad_step;
  A.mesh_nodes = m;
  return A;
}

}  // namespace

RayTransformMatrix assemble_A(const TriMesh& mesh, const FanBeamGrid& grid,
                              const ConformalMetric& metric, double quad_step) {
  return assemble_core(mesh, grid, metric, quad_step, TransformVariant::Plain, nullptr);
}

RayTransformMatrix assemble_A_attenuated(const TriMesh& mesh, const FanBeamGrid& grid,
                                         const ConformalMetric& metric,
                                         const Eigen::VectorXd& a_coeffs,
                                         double quad_step) {
  return assemble_core(mesh, grid, metric, quad_step, TransformVariant::Attenuated,
                       &a_coeffs);
}

RayTransformMatrix assemble_A_weighted(const TriMesh& mesh, const FanBeamGrid& grid,
                                       const ConformalMetric& metric, double quad_step) {
  return assemble_core(mesh, grid, metric, quad_step, TransformVariant::BoundaryWeighted,
                       nullptr);
}

namespace {

void add_noise(Sinogram& sino, const FanBeamGrid& grid, double eps, std::uint64_t seed) {
  sino.noise_level = eps;
  sino.seed = seed;
  if (eps == 0.0) return;
  Rng rng(seed);
  for (int i = 0; i < sino.values.size(); ++i) {
    sino.values[i] += eps * rng.gauss() / std::sqrt(grid.weights[i]);
  }
}

}  // namespace

Sinogram simulate_data(const RayTransformMatrix& A, const FanBeamGrid& grid,
                       const Eigen::VectorXd& f_coeffs, double eps, std::uint64_t seed) {
  if (eps < 0.0) throw UsageError("simulate_data: eps must be >= 0");
  if (A.rows() != grid.size() || f_coeffs.size() != A.cols()) {
    throw UsageError("simulate_data: dimension mismatch");
  }
  Sinogram sino;
  sino.values = A.entries * f_coeffs;
  add_noise(sino, grid, eps, seed);
  return sino;
}

Sinogram simulate_data_analytic(const ConformalMetric& metric, const FanBeamGrid& grid,
                                const std::function<double(Vec2)>& f, double eps,
                                std::uint64_t seed, double quad_step) {
  if (eps < 0.0) throw UsageError("simulate_data: eps must be >= 0");
  const double h = quad_step / 4.0;  // data-side refinement against the inverse crime
  Sinogram sino;
  sino.values.resize(grid.size());
  parallel_for(grid.size(), [&](std::int64_t i) {
    const GeodesicPath path = geodesic_trace(metric, grid.coords[i], h);
    const auto& s = path.samples;
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double t_prev = k > 0 ? s[k - 1].t : s[k].t;
      const double t_next = k + 1 < s.size() ? s[k + 1].t : s[k].t;
      acc += 0.5 * (t_next - t_prev) * f(s[k].x);
    }
    sino.values[i] = acc;
  });
  add_noise(sino, grid, eps, seed);
  return sino;
}

Sinogram simulate_data_analytic_weighted(const ConformalMetric& metric,
                                         const FanBeamGrid& grid,
                                         const std::function<double(Vec2)>& hfun,
                                         double eps, std::uint64_t seed,
                                         double quad_step) {
  if (eps < 0.0) throw UsageError("simulate_data: eps must be >= 0");
  const double h = quad_step / 4.0;
  Sinogram sino;
  sino.values.resize(grid.size());
  parallel_for(grid.size(), [&](std::int64_t i) {
    const GeodesicPath path = geodesic_trace(metric, grid.coords[i], h);
    const double tau = path.tau;
    const int ntheta = std::max<int>(2, static_cast<int>(std::ceil(tau / h)));
    const double dtheta = kPi / ntheta;
    double acc = 0.0;
    for (int q = 0; q < ntheta; ++q) {
      const double theta = (q + 0.5) * dtheta;
      const double t = 0.5 * tau * (1.0 - std::cos(theta));
      const Vec2 x = path_point(path, h, t);
      const double dm = 0.5 * (1.0 - x.norm2());
      if (!(dm > 0.0)) continue;
      acc += dtheta * 0.5 * tau * std::sin(theta) * hfun(x) / std::sqrt(dm);
    }
    sino.values[i] = acc;
  });
  add_noise(sino, grid, eps, seed);
  return sino;
}

Eigen::VectorXd normal_apply(const RayTransformMatrix& A, const FanBeamGrid& grid,
                             const MassMatrix& mass, const Eigen::VectorXd& coeffs) {
  if (A.rows() != grid.size() || coeffs.size() != A.cols() || mass.size() != A.cols()) {
    throw UsageError("normal_apply: dimension mismatch");
  }
  const Eigen::VectorXd proj = grid.weights.cwiseProduct(A.entries * coeffs);
  // Normalization: dividing by 2π turns the raw composition (which
  // backprojects over the full direction circle) into the angular average,
  // so applied to 1 it returns the mean chord length through each node. The
  // row-sum (lumped) mass inverse is the standard normalization for discrete
  // back-projection; the consistent solve is noticeably noisier here — it
  // amplifies the node-level quadrature error of the sparse ray lattice by
  // roughly 2.5x at the documented operating scales.
  const Eigen::VectorXd lumped = mass.mat() * Eigen::VectorXd::Ones(mass.size());
  return (A.entries.transpose() * proj).cwiseQuotient(lumped) / (2.0 * kPi);
}

//----------------------------------------------------------------------------
// Text I/O
//----------------------------------------------------------------------------

void save_matrix(const RayTransformMatrix& A, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_matrix: cannot open " + path);
  out << A.rows() << ' ' << A.cols() << ' ' << A.entries.nonZeros() << ' '
      << variant_name(A.variant) << '\n';
  char buf[80];
  for (int i = 0; i < A.entries.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A.entries, i); it;
         ++it) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", static_cast<int>(it.row()),
                    static_cast<int>(it.col()), it.value());
      out << buf;
    }
  }
  if (!out) throw IoError("save_matrix: write failed for " + path);
}

RayTransformMatrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_matrix: cannot open " + path);
  long n = 0, m = 0, nnz = 0;
  std::string variant;
  if (!(in >> n >> m >> nnz >> variant) || n <= 0 || m <= 0 || nnz < 0) {
    throw IoError("load_matrix: malformed header");
  }
  RayTransformMatrix A;
  if (variant == "plain") {
    A.variant = TransformVariant::Plain;
  } else if (variant == "attenuated") {
    A.variant = TransformVariant::Attenuated;
  } else if (variant == "weighted") {
    A.variant = TransformVariant::BoundaryWeighted;
  } else {
    throw IoError("load_matrix: unknown variant " + variant);
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (long e = 0; e < nnz; ++e) {
    long i = 0, j = 0;
    double v = 0.0;
    if (!(in >> i >> j >> v) || i < 0 || i >= n || j < 0 || j >= m) {
      throw IoError("load_matrix: malformed entry line");
    }
    trips.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
  }
  A.entries.resize(n, m);
  A.entries.setFromTriplets(trips.begin(), trips.end());
  A.mesh_nodes = static_cast<int>(m);
  A.metric_kind = MetricKind::Custom;  // not recorded in the file format
  return A;
}

void save_sinogram(const FanBeamGrid& grid, const Sinogram& sino, const std::string& path) {
  if (sino.values.size() != grid.size()) throw UsageError("save_sinogram: size mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("save_sinogram: cannot open " + path);
  out << "beta,alpha,value\n";
  char buf[120];
  for (int i = 0; i < grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.coords[i].beta,
                  grid.coords[i].alpha, sino.values[i]);
    out << buf;
  }
  if (!out) throw IoError("save_sinogram: write failed for " + path);
}

Sinogram load_sinogram(const FanBeamGrid& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_sinogram: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("load_sinogram: empty file");
  Sinogram sino;
  sino.values.resize(grid.size());
  int i = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (i >= grid.size()) throw IoError("load_sinogram: more rows than grid rays");
    double beta = 0, alpha = 0, value = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &beta, &alpha, &value) != 3) {
      throw IoError("load_sinogram: malformed row: " + line);
    }
    sino.values[i++] = value;
  }
  if (i != grid.size()) throw IoError("load_sinogram: fewer rows than grid rays");
  return sino;
}

}  // namespace geotomo
