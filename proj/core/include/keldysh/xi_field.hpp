#pragma once

#include <vector>

#include "keldysh/grid.hpp"
#include "keldysh/operators.hpp"

namespace keldysh {

// Gradient of the auxiliary field xi attached to a state u:
//   xi_x = -2 u_x u_y,   xi_y = K u_x^2 - u_y^2.
// xi itself is defined up to a constant; everything downstream consumes the
// gradient, path increments of it, or its trace on lines.
struct XiGradient {
  GridField gx, gy;
};

XiGradient build_xi_gradient(const TypeChangeFn& K, const GridField& u);

// Line integral of gx dx + gy dy along a polyline, trapezoid on interpolated
// endpoint values. Segments with an uninterpolable endpoint are skipped and
// counted.
struct PathIntegral {
  double value = 0.0;
  int skipped_segments = 0;
};
PathIntegral integrate_xi(const XiGradient& grad, std::span<const Point> path);

// Along a characteristic, d xi / dy = -(sqrt(-K) u_x + u_y)^2 on the plus
// branch (minus sign inside for the minus branch), which in terms of the
// gradient is gy + s sqrt(-K) gx with s = +-1. The check compares the measured
// per-segment increment (i) against this closed form (ii) and records the
// worst positive increment per unit increasing y.
struct DecayCheckResult {
  double max_abs_discrepancy = 0.0;  // |(i) - (ii)| over segments, per unit y
  double max_positive_rate = 0.0;    // max over segments of d xi / dy, clipped at 0
  int segments = 0;
  int skipped_segments = 0;
};
DecayCheckResult characteristic_decay_check(const XiGradient& grad, const TypeChangeFn& K,
                                            const CharacteristicPath& path);

// Trace of u_y and xi_y along the sonic column of the grid. K(0) = 0 makes
// xi_y = -u_y^2 there, so the two vanish together.
struct SonicLineReport {
  std::vector<double> y, u_y, xi_y;
  double max_abs_uy = 0.0;
  double max_abs_xiy = 0.0;
};
SonicLineReport sonic_line_report(const TypeChangeFn& K, const GridField& u);

}  // namespace keldysh
