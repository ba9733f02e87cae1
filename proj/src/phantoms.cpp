#include "geotomo/phantoms.hpp"

namespace geotomo {

double EllipsePhantom::eval(Vec2 x) const {
  double s = 0.0;
  for (const Ellipse& e : ellipses) {
    const Vec2 d = x - e.center;
    const double phi = e.angle_deg * kPi / 180.0;
    const double c = std::cos(phi), sn = std::sin(phi);
    const double xr = c * d.x + sn * d.y;
    const double yr = -sn * d.x + c * d.y;
    const double q = (xr / e.semi_a) * (xr / e.semi_a) +
                     (yr / e.semi_b) * (yr / e.semi_b);
    if (q <= 1.0) s += e.intensity;
  }
  return s;
}

const EllipsePhantom& shepp_logan_phantom() {
  // Modified (contrast-enhanced) Shepp-Logan table:
  // intensity, semi-axes (a, b), center (x, y), rotation (deg).
  // Scaled by 0.95 so the support stays strictly inside the unit disk.
  static const EllipsePhantom phantom = [] {
    struct Row {
      double A, a, b, x0, y0, phi;
    };
    static constexpr Row rows[] = {
        {1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
        {-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
        {0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
        {0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
        {0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
        {0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
    };
    const double scale = 0.95;
    EllipsePhantom p;
    for (const Row& r : rows) {
      p.ellipses.push_back({r.A,
                            {scale * r.x0, scale * r.y0},
                            scale * r.a,
                            scale * r.b,
                            r.phi});
    }
    return p;
  }();
  return phantom;
}

double shepp_logan(Vec2 x) { return shepp_logan_phantom().eval(x); }

double h2_smooth(Vec2 x) {
  const Vec2 d1 = x - Vec2{0.25, 0.0};
  const Vec2 d2 = x - Vec2{-0.3, -0.2};
  return 1.0 + 0.5 * std::exp(-6.0 * d1.norm2()) - 0.4 * std::exp(-6.0 * d2.norm2());
}

double elliptic_E(double k) {
  if (!(k >= 0.0 && k <= 1.0)) {
    throw UsageError("elliptic_E: modulus must be in [0, 1]");
  }
  if (k == 1.0) return 1.0;  // comp_ellint_2 is exact here too; keep explicit.
  return std::comp_ellint_2(k);
}

double oracle_N1(double r) {
  if (!(r >= 0.0 && r < 1.0)) {
    throw UsageError("oracle_N1: radius must be in [0, 1)");
  }
  return 4.0 * elliptic_E(r) / kPi;
}

double oracle_chord(FanBeamCoord coord) { return 2.0 * std::cos(coord.alpha); }

}  // namespace geotomo
