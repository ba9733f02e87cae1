#include "geotomo/geometry.hpp"

namespace geotomo {

ConformalMetric::ConformalMetric(MetricKind kind, std::vector<BumpTerm> terms)
    : kind_(kind), terms_(std::move(terms)) {}

ConformalMetric ConformalMetric::euclidean() {
  return ConformalMetric(MetricKind::Euclidean, {});
}

ConformalMetric ConformalMetric::bump() {
  std::vector<BumpTerm> terms = {
      {0.45, {0.3, 0.3}, 8.0},
      {-0.45, {-0.3, -0.3}, 8.0},
  };
  return ConformalMetric(MetricKind::Bump, std::move(terms));
}

ConformalMetric ConformalMetric::custom(std::vector<BumpTerm> terms) {
  return ConformalMetric(MetricKind::Custom, std::move(terms));
}

PhasePoint fanbeam_to_phase(const ConformalMetric& metric, FanBeamCoord coord) {
  if (!(std::abs(coord.alpha) < kPi / 2.0)) {
    throw UsageError("fanbeam_to_phase: |alpha| must be < pi/2 (grazing rays excluded)");
  }
  const Vec2 x{std::cos(coord.beta), std::sin(coord.beta)};
  const double phi = coord.beta + kPi + coord.alpha;
  const double scale = std::exp(-metric.lambda(x));
  return {x, {scale * std::cos(phi), scale * std::sin(phi)}};
}

namespace {

// Right-hand side of the first-order system y = (x, v).
inline PhasePoint ode_rhs(const ConformalMetric& metric, const PhasePoint& y) {
  const Vec2 g = metric.grad_lambda(y.x);
  const double gv = g.dot(y.v);
  const double v2 = y.v.norm2();
  return {y.v, -2.0 * gv * y.v + v2 * g};
}

inline PhasePoint rk4_step(const ConformalMetric& metric, const PhasePoint& y,
                           double h) {
  const PhasePoint k1 = ode_rhs(metric, y);
  const PhasePoint k2 =
      ode_rhs(metric, {y.x + (h / 2.0) * k1.x, y.v + (h / 2.0) * k1.v});
  const PhasePoint k3 =
      ode_rhs(metric, {y.x + (h / 2.0) * k2.x, y.v + (h / 2.0) * k2.v});
  const PhasePoint k4 = ode_rhs(metric, {y.x + h * k3.x, y.v + h * k3.v});
  return {y.x + (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
          y.v + (h / 6.0) * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
}

constexpr double kTrappingGuard = 100.0;
// Enough halvings that the exit overshoot (step * 2^-iters * speed) stays
// below 1e-13 even at the largest permitted step, so downstream point
// location never sees an exit sample outside its boundary tolerance.
constexpr int kBisectIters = 45;

GeodesicPath trace_from(const ConformalMetric& metric, PhasePoint y,
                        FanBeamCoord start, double step) {
  if (!(step > 0.0 && step <= 0.1)) {
    throw UsageError("geodesic_trace: step must be in (0, 0.1]");
  }

  GeodesicPath path;
  path.start = start;
  path.samples.push_back({0.0, y.x, y.v});

  double t = 0.0;
  for (;;) {
    const PhasePoint next = rk4_step(metric, y, step);
    if (next.x.norm2() > 1.0) {
      // Exit happened inside this step: bisect the step fraction. The
      // evaluation restarts from y each time, so the refined state is a
      // genuine RK4 partial step, keeping the sample contract (uniform
      // spacing plus one final partial step).
      double lo = 0.0, hi = step;
      PhasePoint exit_state = next;
      for (int it = 0; it < kBisectIters; ++it) {
        const double mid = 0.5 * (lo + hi);
        const PhasePoint probe = rk4_step(metric, y, mid);
        if (probe.x.norm2() > 1.0) {
          hi = mid;
          exit_state = probe;
        } else {
          lo = mid;
        }
      }
      path.tau = t + hi;
      path.samples.push_back({path.tau, exit_state.x, exit_state.v});
      return path;
    }
    t += step;
    if (t > kTrappingGuard) {
      throw NumericError("geodesic_trace: arclength exceeded trapping guard 100");
    }
    y = next;
    path.samples.push_back({t, y.x, y.v});
  }
}

}  // namespace

GeodesicPath geodesic_trace(const ConformalMetric& metric, FanBeamCoord coord,
                            double step) {
  return trace_from(metric, fanbeam_to_phase(metric, coord), coord, step);
}

GeodesicPath geodesic_trace_phase(const ConformalMetric& metric, Vec2 x, Vec2 v,
                                  double step) {
  FanBeamCoord start{};
  if (std::abs(x.norm2() - 1.0) < 1e-6) {
    double beta = std::atan2(x.y, x.x);
    if (beta < 0.0) beta += 2.0 * kPi;
    double alpha = std::atan2(v.y, v.x) - beta - kPi;
    while (alpha > kPi) alpha -= 2.0 * kPi;
    while (alpha < -kPi) alpha += 2.0 * kPi;
    start = {beta, alpha};
  }
  return trace_from(metric, {x, v}, start, step);
}

double exit_time(const ConformalMetric& metric, FanBeamCoord coord, double step) {
  return geodesic_trace(metric, coord, step).tau;
}

}  // namespace geotomo
