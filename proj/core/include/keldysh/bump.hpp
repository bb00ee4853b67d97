#pragma once

#include "keldysh/geometry.hpp"

namespace keldysh {

// Normalized quartic B-spline profile: piecewise degree-4 polynomial, C^3,
// supported on [-1, 1], with B(0) = 1. Returns 0 outside the support.
double bspline4(double t);
double bspline4_d1(double t);
double bspline4_d2(double t);

// Tensor bump amp * B((x-cx)/rx) * B((y-cy)/ry), supported on the closed box
// [cx-rx, cx+rx] x [cy-ry, cy+ry]. C^3, so all second derivatives are C^1.
struct TensorBump {
  double cx = 0.0, cy = 0.0;
  double rx = 1.0, ry = 1.0;
  double amp = 1.0;

  double value(double x, double y) const;
  double dx(double x, double y) const;
  double dy(double x, double y) const;
  double dxx(double x, double y) const;
  double dyy(double x, double y) const;
  double dxy(double x, double y) const;
  bool supports(double x, double y) const;
};

}  // namespace keldysh
