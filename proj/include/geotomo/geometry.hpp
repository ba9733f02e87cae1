#pragma once

// Geodesic geometry on the unit disk with a conformal metric
// g = e^{2 lambda(x)} (dx1^2 + dx2^2). Rays enter through the fan-beam chart
// of the influx boundary and are traced by a fixed-step RK4 integrator in
// g-arclength until they exit the disk.

#include <vector>

#include "geotomo/common.hpp"

namespace geotomo {

//----------------------------------------------------------------------------
// Conformal metric: lambda is a finite sum of Gaussian bumps
// amp * exp(-decay * |x - center|^2). The empty sum is the Euclidean metric.
//----------------------------------------------------------------------------

struct BumpTerm {
  double amplitude = 0.0;
  Vec2 center;
  double decay = 0.0;  // exponent coefficient, > 0
};

enum class MetricKind { Euclidean, Bump, Custom };

class ConformalMetric {
 public:
  // Flat disk: lambda == 0.
  static ConformalMetric euclidean();

  // The two-bump sound-speed profile used by the non-Euclidean experiments:
  // lambda(x) = 0.45 (exp(-8|x-(0.3,0.3)|^2) - exp(-8|x+(0.3,0.3)|^2)),
  // antisymmetric under x -> -x.
  static ConformalMetric bump();

  static ConformalMetric custom(std::vector<BumpTerm> terms);

  double lambda(Vec2 x) const {
    double s = 0.0;
    for (const BumpTerm& b : terms_) {
      const Vec2 d = x - b.center;
      s += b.amplitude * std::exp(-b.decay * d.norm2());
    }
    return s;
  }

  Vec2 grad_lambda(Vec2 x) const {
    Vec2 g;
    for (const BumpTerm& b : terms_) {
      const Vec2 d = x - b.center;
      const double e = -2.0 * b.decay * b.amplitude * std::exp(-b.decay * d.norm2());
      g += e * d;
    }
    return g;
  }

  MetricKind kind() const { return kind_; }
  bool is_euclidean() const { return terms_.empty(); }
  const std::vector<BumpTerm>& terms() const { return terms_; }

 private:
  ConformalMetric(MetricKind kind, std::vector<BumpTerm> terms);

  MetricKind kind_ = MetricKind::Euclidean;
  std::vector<BumpTerm> terms_;
};

//----------------------------------------------------------------------------
// Fan-beam chart of the influx boundary: beta in [0, 2pi) locates the entry
// point (cos beta, sin beta); alpha in (-pi/2, pi/2) tilts the inward
// direction off the inner normal. Grazing rays (|alpha| = pi/2) are excluded.
//----------------------------------------------------------------------------

struct FanBeamCoord {
  double beta = 0.0;
  double alpha = 0.0;
};

struct PhasePoint {
  Vec2 x;
  Vec2 v;
};

// x = (cos beta, sin beta); v = e^{-lambda(x)} (cos(beta+pi+alpha),
// sin(beta+pi+alpha)): inward, unit g-norm. Throws UsageError on
// |alpha| >= pi/2.
PhasePoint fanbeam_to_phase(const ConformalMetric& metric, FanBeamCoord coord);

//----------------------------------------------------------------------------
// Traced geodesic: uniform g-arclength samples (final step partial), ending
// on the boundary circle.
//----------------------------------------------------------------------------

struct PathSample {
  double t = 0.0;  // g-arclength from entry
  Vec2 x;
  Vec2 v;
};

struct GeodesicPath {
  std::vector<PathSample> samples;
  double tau = 0.0;  // exit time (total g-arclength)
  FanBeamCoord start;
};

// Integrates the conformal geodesic equation
//   x'' = -2 (grad lambda . x') x' + |x'|^2 grad lambda
// (the unit-speed equation of g = e^{2 lambda} delta; from the Christoffel
// symbols Gamma^k_ij = d_j lambda delta_ik + d_i lambda delta_jk
//                      - d_k lambda delta_ij)
// by classical RK4 with fixed step until |x| > 1, then refines the exit by
// 30 bisection steps on |x|^2 - 1 over the last step. Preconditions:
// 0 < step <= 0.1 (UsageError). Arclength beyond 100 means the metric traps
// or the integrator blew up: NumericError.
GeodesicPath geodesic_trace(const ConformalMetric& metric, FanBeamCoord coord,
                            double step = 1e-3);

// Same integrator from an arbitrary interior/boundary phase point with
// inward velocity (used by reversibility checks and the scattering
// involution). The start coord is the fan-beam chart of (x, v) when x is on
// the boundary, and is left zero otherwise.
GeodesicPath geodesic_trace_phase(const ConformalMetric& metric, Vec2 x, Vec2 v,
                                  double step = 1e-3);

// Exit time tau(coord) of the traced geodesic.
double exit_time(const ConformalMetric& metric, FanBeamCoord coord,
                 double step = 1e-3);

}  // namespace geotomo
