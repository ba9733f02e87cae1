#include "geotomo/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace geotomo {

namespace {

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline double signed_area2(Vec2 p0, Vec2 p1, Vec2 p2) {
  return cross(p1 - p0, p2 - p0);  // twice the signed area
}

constexpr double kBaryTol = 1e-12;

}  // namespace

//----------------------------------------------------------------------------
// TriMesh validation + location index
//----------------------------------------------------------------------------

void TriMesh::finalize() {
  const int m = num_nodes();
  if (m < 3) throw NumericError("mesh: fewer than 3 nodes");
  if (static_cast<int>(boundary.size()) != m) {
    throw NumericError("mesh: boundary flag count mismatch");
  }

  for (int j = 0; j < m; ++j) {
    const double r = nodes[j].norm();
    if (r > 1.0 + 1e-12) throw NumericError("mesh: node outside the closed unit disk");
    if (boundary[j] && std::abs(r - 1.0) > 1e-10) {
      throw NumericError("mesh: boundary-flagged node off the unit circle");
    }
  }

  // Coincident nodes make downstream Gram matrices singular; reject early.
  {
    std::vector<int> order(m);
    for (int j = 0; j < m; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (nodes[a].x != nodes[b].x) return nodes[a].x < nodes[b].x;
      return nodes[a].y < nodes[b].y;
    });
    for (int j = 0; j + 1 < m; ++j) {
      const Vec2 a = nodes[order[j]], b = nodes[order[j + 1]];
      if (a.x == b.x && a.y == b.y) throw NumericError("mesh: coincident nodes");
    }
  }

  polygon_area_ = 0.0;
  std::unordered_map<std::uint64_t, int> directed;  // edge key -> triangle
  directed.reserve(triangles.size() * 3);
  const auto key = [m](int a, int b) {
    return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(m) +
           static_cast<std::uint64_t>(b);
  };

  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles[t];
    for (int e = 0; e < 3; ++e) {
      if (tri[e] < 0 || tri[e] >= m) throw NumericError("mesh: triangle index out of range");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw NumericError("mesh: repeated node in triangle");
    }
    const double a2 = signed_area2(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    if (!(a2 > 2e-14)) {
      throw NumericError("mesh: degenerate or negatively oriented triangle");
    }
    polygon_area_ += 0.5 * a2;
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e], b = tri[(e + 1) % 3];
      if (!directed.emplace(key(a, b), t).second) {
        throw NumericError("mesh: non-conforming triangulation (repeated directed edge)");
      }
    }
  }

  // Hull = directed edges without a reverse partner; must form one closed
  // CCW loop (the disk has no holes).
  std::unordered_map<int, int> next;
  for (const auto& [k, t] : directed) {
    const int a = static_cast<int>(k / static_cast<std::uint64_t>(m));
    const int b = static_cast<int>(k % static_cast<std::uint64_t>(m));
    if (!directed.count(key(b, a))) {
      if (!next.emplace(a, b).second) {
        throw NumericError("mesh: non-conforming hull (branching boundary)");
      }
    }
  }
  if (next.empty()) throw NumericError("mesh: no hull edges");
  hull_.clear();
  {
    int start = next.begin()->first;
    for (const auto& [a, b] : next) start = std::min(start, a);
    int cur = start;
    do {
      hull_.push_back(cur);
      const auto it = next.find(cur);
      if (it == next.end()) throw NumericError("mesh: open hull loop");
      cur = it->second;
    } while (cur != start && hull_.size() <= next.size());
    if (cur != start || hull_.size() != next.size()) {
      throw NumericError("mesh: hull is not a single closed loop");
    }
  }

  // Angle index over the hull for sliver projection; usable only when the
  // hull is star-shaped around the origin (true for disk meshes). Crafted
  // meshes that fail the monotone-angle check fall back to a linear scan.
  hull_angle_.clear();
  {
    const int h = static_cast<int>(hull_.size());
    int rot = 0;
    std::vector<double> ang(h);
    for (int i = 0; i < h; ++i) {
      ang[i] = std::atan2(nodes[hull_[i]].y, nodes[hull_[i]].x);
      if (ang[i] < ang[rot]) rot = i;
    }
    std::rotate(hull_.begin(), hull_.begin() + rot, hull_.end());
    std::rotate(ang.begin(), ang.begin() + rot, ang.end());
    bool monotone = true;
    for (int i = 0; i + 1 < h; ++i) {
      if (!(ang[i] < ang[i + 1])) {
        monotone = false;
        break;
      }
    }
    if (monotone) hull_angle_ = std::move(ang);
  }

  build_index();
  finalized_ = true;
}

void TriMesh::build_index() {
  // Median edge length sets the bucket size (~2x median).
  std::vector<double> lengths;
  lengths.reserve(triangles.size() * 3);
  for (const auto& tri : triangles) {
    for (int e = 0; e < 3; ++e) {
      lengths.push_back((nodes[tri[e]] - nodes[tri[(e + 1) % 3]]).norm());
    }
  }
  std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
  const double median = lengths[lengths.size() / 2];
  cell_size_ = std::max(2.0 * median, 1e-6);
  grid_dim_ = std::clamp(static_cast<int>(std::ceil(2.0 / cell_size_)), 1, 1024);
  cell_size_ = 2.0 / grid_dim_;

  cells_.assign(static_cast<std::size_t>(grid_dim_) * grid_dim_, {});
  const auto cell_of = [this](double v) {
    return std::clamp(static_cast<int>((v + 1.0) / cell_size_), 0, grid_dim_ - 1);
  };
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles[t];
    double xmin = 1e30, xmax = -1e30, ymin = 1e30, ymax = -1e30;
    for (int e = 0; e < 3; ++e) {
      xmin = std::min(xmin, nodes[tri[e]].x);
      xmax = std::max(xmax, nodes[tri[e]].x);
      ymin = std::min(ymin, nodes[tri[e]].y);
      ymax = std::max(ymax, nodes[tri[e]].y);
    }
    for (int cy = cell_of(ymin); cy <= cell_of(ymax); ++cy) {
      for (int cx = cell_of(xmin); cx <= cell_of(xmax); ++cx) {
        cells_[static_cast<std::size_t>(cy) * grid_dim_ + cx].push_back(t);
      }
    }
  }
}

std::optional<BaryPoint> TriMesh::locate(Vec2 x) const {
  if (!finalized_) throw NumericError("mesh: locate before finalize");
  if (std::abs(x.x) > 1.0 + 1e-9 || std::abs(x.y) > 1.0 + 1e-9) return std::nullopt;
  const int cx = std::clamp(static_cast<int>((x.x + 1.0) / cell_size_), 0, grid_dim_ - 1);
  const int cy = std::clamp(static_cast<int>((x.y + 1.0) / cell_size_), 0, grid_dim_ - 1);
  // Bucket lists are built in ascending triangle order, so the first hit is
  // the lowest-index containing triangle (deterministic on shared edges).
  for (int t : cells_[static_cast<std::size_t>(cy) * grid_dim_ + cx]) {
    const auto& tri = triangles[t];
    const Vec2 p0 = nodes[tri[0]], p1 = nodes[tri[1]], p2 = nodes[tri[2]];
    const double d = signed_area2(p0, p1, p2);
    const double w1 = cross(x - p0, p2 - p0) / d;
    if (w1 < -kBaryTol) continue;
    const double w2 = cross(p1 - p0, x - p0) / d;
    if (w2 < -kBaryTol) continue;
    const double w0 = 1.0 - w1 - w2;
    if (w0 < -kBaryTol) continue;
    return BaryPoint{t, {w0, w1, w2}};
  }
  return std::nullopt;
}

std::optional<ShapeEval> TriMesh::shape_clamped(Vec2 x) const {
  if (const auto bp = locate(x)) {
    const auto& tri = triangles[bp->tri];
    return ShapeEval{{tri[0], tri[1], tri[2]}, bp->w};
  }
  if (x.norm() > 1.0 + 1e-12) return std::nullopt;

  // In the sliver between hull and circle: project onto the nearest hull
  // edge and evaluate the two endpoint shape functions there.
  const int h = static_cast<int>(hull_.size());
  int best_edge = -1;
  double best_s = 0.0, best_d2 = 1e30;
  const auto consider = [&](int e) {
    const Vec2 pa = nodes[hull_[e]], pb = nodes[hull_[(e + 1) % h]];
    const Vec2 ab = pb - pa;
    const double len2 = ab.norm2();
    const double s = len2 > 0.0 ? std::clamp((x - pa).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec2 proj = pa + s * ab;
    const double d2 = (x - proj).norm2();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_s = s;
      best_edge = e;
    }
  };
  if (!hull_angle_.empty()) {
    double theta = std::atan2(x.y, x.x);
    if (theta < hull_angle_.front()) theta += 2.0 * kPi;
    const auto it = std::upper_bound(hull_angle_.begin(), hull_angle_.end(), theta);
    const int e = static_cast<int>(it - hull_angle_.begin()) - 1;
    consider(((e - 1) % h + h) % h);
    consider((e % h + h) % h);
    consider((e + 1) % h);
  } else {
    for (int e = 0; e < h; ++e) consider(e);
  }
  return ShapeEval{{hull_[best_edge], hull_[(best_edge + 1) % h], -1},
                   {1.0 - best_s, best_s, 0.0}};
}

//----------------------------------------------------------------------------
// Generation
//----------------------------------------------------------------------------

namespace {

// Node spacing law h(r) = h0 · max(1, kGradingSlope·(1−r)): uniform spacing
// h0 in an outer band, linearly coarser toward the center. The fan-beam
// grids pair source/detector counts with mesh size, and near the fan focus
// the lattice of ray offsets is strictly coarser than a uniform mesh would
// be; nodes finer than the local ray spacing are effectively unsampled, and
// quadratures built on the ray weights (back-projection, normal operator)
// degenerate there. The slope keeps the center spacing a few ray offsets
// wide across the paired scales while leaving most of the disk at the
// uniform resolution h0.
constexpr double kGradingSlope = 5.0;

struct RingLayout {
  std::vector<double> radii;  // ascending, last entry exactly 1
  std::vector<int> counts;    // nodes per ring
  long total = 1;             // node count including the center
};

// Rings equispaced in the stretched coordinate t(r) = ∫0^r dr'/h(r'), so
// radial gaps track the local spacing; per-ring counts do the same
// tangentially. Closed form: t is logarithmic over the graded zone
// r < 1 − 1/slope and linear beyond it.
RingLayout plan_rings(double h0) {
  const double s = kGradingSlope;
  const double r_star = 1.0 - 1.0 / s;
  const double t_star = std::log(s) / (h0 * s);
  const double t_total = t_star + (1.0 - r_star) / h0;
  const int K = std::max(1, static_cast<int>(std::lround(t_total)));
  RingLayout layout;
  for (int k = 1; k <= K; ++k) {
    const double tk = t_total * k / K;
    double r = tk <= t_star ? 1.0 - std::exp(-h0 * s * tk)
                            : r_star + h0 * (tk - t_star);
    double h = h0 * std::max(1.0, s * (1.0 - r));
    // Detune the ring radii with a golden-sequence offset (deterministic,
    // well spread, never resonant). Every source sees a concentric ring at
    // the same detector offsets, so a ring whose radius aligns with the
    // detector lattice collects the same quadrature error from all sources
    // at once; breaking the alignment lets the errors average out instead.
    if (k < K) {
      const double phase = k * 0.6180339887498949;
      r += 0.35 * h * (phase - std::floor(phase) - 0.5);
      h = h0 * std::max(1.0, s * (1.0 - r));
    } else {
      r = 1.0;
    }
    const int nk = std::max(3, static_cast<int>(std::lround(2.0 * kPi * r / h)));
    layout.radii.push_back(r);
    layout.counts.push_back(nk);
    layout.total += nk;
  }
  return layout;
}

}  // namespace

TriMesh generate_disk_mesh(int target_nodes, int* rings_out) {
  if (target_nodes < 16) throw UsageError("generate_disk_mesh: target_nodes must be >= 16");

  // Node count decreases in h0; bisect, then keep the closer endpoint.
  double lo = 1e-3, hi = 3.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (plan_rings(mid).total > target_nodes ? lo : hi) = mid;
  }
  const RingLayout lo_plan = plan_rings(lo), hi_plan = plan_rings(hi);
  const RingLayout& plan =
      std::abs(lo_plan.total - static_cast<long>(target_nodes)) <=
              std::abs(hi_plan.total - static_cast<long>(target_nodes))
          ? lo_plan
          : hi_plan;
  const int K = static_cast<int>(plan.radii.size());

  TriMesh mesh;
  mesh.nodes.push_back({0.0, 0.0});
  mesh.boundary.push_back(0);
  std::vector<int> ring_start{0};  // treat the center as ring 0
  std::vector<int> ring_size{1};
  for (int k = 1; k <= K; ++k) {
    const int nk = plan.counts[k - 1];
    const double r = plan.radii[k - 1];
    ring_start.push_back(mesh.num_nodes());
    ring_size.push_back(nk);
    for (int j = 0; j < nk; ++j) {
      const double th = 2.0 * kPi * j / nk;
      mesh.nodes.push_back({r * std::cos(th), r * std::sin(th)});
      mesh.boundary.push_back(k == K ? 1 : 0);
    }
  }

  // Center fan.
  for (int j = 0; j < ring_size[1]; ++j) {
    mesh.triangles.push_back({0, ring_start[1] + j, ring_start[1] + (j + 1) % ring_size[1]});
  }

  // Zipper between consecutive rings: advance whichever ring's next node
  // comes first in angle (ties advance the outer ring), emitting one CCW
  // triangle per step.
  for (int k = 2; k <= K; ++k) {
    const int ni = ring_size[k - 1], no = ring_size[k];
    const int si = ring_start[k - 1], so = ring_start[k];
    int i = 0, j = 0;
    while (i < ni || j < no) {
      const bool advance_outer =
          (i == ni) || (j < no && static_cast<double>(j + 1) / no <=
                                      static_cast<double>(i + 1) / ni);
      if (advance_outer) {
        mesh.triangles.push_back({si + i % ni, so + j % no, so + (j + 1) % no});
        ++j;
      } else {
        mesh.triangles.push_back({si + i % ni, so + j % no, si + (i + 1) % ni});
        ++i;
      }
    }
  }

  mesh.finalize();
  if (rings_out) *rings_out = K;
  return mesh;
}

//----------------------------------------------------------------------------
// Save / load
//----------------------------------------------------------------------------

void save_mesh(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_mesh: cannot open " + path);
  out << mesh.num_nodes() << ' ' << mesh.num_triangles() << '\n';
  char buf[80];
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %d\n", mesh.nodes[j].x, mesh.nodes[j].y,
                  mesh.boundary[j] ? 1 : 0);
    out << buf;
  }
  for (const auto& tri : mesh.triangles) {
    out << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
  }
  if (!out) throw IoError("save_mesh: write failed for " + path);
}

TriMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_mesh: cannot open " + path);
  int m = 0, k = 0;
  if (!(in >> m >> k) || m < 0 || k < 0) throw IoError("load_mesh: malformed header");
  TriMesh mesh;
  mesh.nodes.resize(m);
  mesh.boundary.resize(m);
  for (int j = 0; j < m; ++j) {
    int b = 0;
    if (!(in >> mesh.nodes[j].x >> mesh.nodes[j].y >> b) || (b != 0 && b != 1)) {
      throw IoError("load_mesh: malformed node line");
    }
    mesh.boundary[j] = static_cast<std::uint8_t>(b);
  }
  mesh.triangles.resize(k);
  for (int t = 0; t < k; ++t) {
    if (!(in >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2])) {
      throw IoError("load_mesh: malformed triangle line");
    }
  }
  try {
    mesh.finalize();
  } catch (const NumericError& err) {
    throw IoError("load_mesh: invalid mesh in " + path + ": " + err.what());
  }
  return mesh;
}

//----------------------------------------------------------------------------
// Interpolation and mass matrix
//----------------------------------------------------------------------------

double interp(const TriMesh& mesh, const Eigen::VectorXd& coeffs, Vec2 x) {
  if (coeffs.size() != mesh.num_nodes()) {
    throw UsageError("interp: coefficient length does not match node count");
  }
  const auto bp = mesh.locate(x);
  if (!bp) return 0.0;  // extension by zero outside the mesh polygon
  const auto& tri = mesh.triangles[bp->tri];
  return bp->w[0] * coeffs[tri[0]] + bp->w[1] * coeffs[tri[1]] + bp->w[2] * coeffs[tri[2]];
}

MassMatrix::MassMatrix(Eigen::SparseMatrix<double> mat)
    : mat_(std::move(mat)),
      llt_(std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>()) {
  llt_->compute(mat_);
  if (llt_->info() != Eigen::Success) {
    throw NumericError("mass matrix factorization failed");
  }
}

Eigen::VectorXd MassMatrix::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != mat_.rows()) throw UsageError("MassMatrix::solve: size mismatch");
  return llt_->solve(rhs);
}

double MassMatrix::total() const { return mat_.sum(); }

MassMatrix mass_matrix(const TriMesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);
  for (const auto& tri : mesh.triangles) {
    const double S =
        0.5 * signed_area2(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
    if (!(S > 1e-14)) throw NumericError("mass_matrix: degenerate triangle");
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        trips.emplace_back(tri[a], tri[b], S / 12.0 * (a == b ? 2.0 : 1.0));
      }
    }
  }
  Eigen::SparseMatrix<double> M(mesh.num_nodes(), mesh.num_nodes());
  M.setFromTriplets(trips.begin(), trips.end());
  return MassMatrix(std::move(M));
}

}  // namespace geotomo
