#pragma once

#include <functional>

namespace keldysh {

// Differential multiplier M u = a u + b u_x + c u_y with the analytic partial
// derivatives of its coefficients carried along for the coefficient algebra of
// the energy identity. b is continuous across x = 0; b_x may jump there, and
// the stored closure returns the x >= 0 branch on the sonic line.
struct MultiplierSpec {
  double a = -1.0;
  std::function<double(double, double)> b, c;
  std::function<double(double, double)> b_x, b_y, c_y;

  // Construction parameters (recorded for reporting).
  double delta = 0.0;     // final value after any automatic shrinking
  double kappa = 1.0;
  double mu1 = 0.0;       // max x over the region
  double mu2 = 0.0;       // min x over the region
  double Q1 = 1.0;        // exp(2 delta mu1)
  double Q2 = 1.0;        // exp(mu2)
  double eps = 0.0;       // certified lower bound on the u_y^2 coefficient
  int shrink_count = 0;
  bool omega_minus_empty = false;
};

}  // namespace keldysh
