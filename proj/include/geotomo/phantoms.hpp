#pragma once

// Test functions and analytic oracles: the modified Shepp-Logan phantom, a
// smooth non-vanishing boundary function for the weighted-transform example,
// the complete elliptic integral E (AGM method), and closed-form references
// used to validate the forward operator.

#include <vector>

#include "geotomo/common.hpp"
#include "geotomo/geometry.hpp"

namespace geotomo {

//----------------------------------------------------------------------------
// Additive ellipse phantom.
//----------------------------------------------------------------------------

struct Ellipse {
  double intensity = 0.0;
  Vec2 center;
  double semi_a = 0.0;     // semi-axis along the rotated x-direction
  double semi_b = 0.0;     // semi-axis along the rotated y-direction
  double angle_deg = 0.0;  // counterclockwise rotation
};

struct EllipsePhantom {
  std::vector<Ellipse> ellipses;

  // Sum of intensities of ellipses containing x (boundary counts as inside).
  double eval(Vec2 x) const;
};

// The standard 10-ellipse modified (contrast-enhanced) Shepp-Logan table,
// scaled by 0.95 so the support is strictly inside the unit disk.
const EllipsePhantom& shepp_logan_phantom();

// Point evaluation of the scaled phantom.
double shepp_logan(Vec2 x);

// Smooth on the closed disk and bounded away from zero at the boundary:
// h2(x) = 1 + 0.5 exp(-6|x-(0.25,0)|^2) - 0.4 exp(-6|x+(0.3,0.2)|^2).
// Dividing by sqrt(d_M) turns it into the boundary-blowup phantom f2.
double h2_smooth(Vec2 x);

// Complete elliptic integral of the second kind,
// E(k) = int_0^{pi/2} sqrt(1 - k^2 sin^2 t) dt, by the AGM iteration
// (quadratic convergence, accurate to ~1e-15). Throws UsageError outside
// [0, 1].
double elliptic_E(double k);

// Radial profile of the Euclidean normal operator applied to 1, in the
// fiber-normalized convention: 4 E(r) / pi. Throws UsageError unless
// 0 <= r < 1.
double oracle_N1(double r);

// Euclidean chord length of the ray (beta, alpha): 2 cos alpha.
double oracle_chord(FanBeamCoord coord);

}  // namespace geotomo
