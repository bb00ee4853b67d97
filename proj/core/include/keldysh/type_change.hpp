#pragma once

#include <functional>
#include <string>
#include <vector>

namespace keldysh {

// Coefficient family K for operators of the form K(x) u_xx + u_yy + lower order.
// Admissibility: K(0) = 0 and x*K(x) > 0 for x != 0, so the operator is elliptic
// on x > 0 and hyperbolic on x < 0 with the type change on the line x = 0.
struct TypeChangeFn {
  std::function<double(double)> eval;
  std::function<double(double)> deriv1;
  std::function<double(double)> deriv2;
  std::string name;
  // False when the derivatives do not extend continuously through x = 0
  // (piecewise-constant K). Consumers must then avoid deriv1/deriv2 at the
  // sonic line; away from x = 0 the closures are valid.
  bool c1_at_sonic = true;
};

// K(x) = x^(2*k0 - 1) for integer k0 >= 1. Smooth, odd, strictly monotone.
TypeChangeFn make_power(int k0);

// K(x) = sgn(x) with K(0) = 0. Unit coefficient magnitude on both sides;
// derivative undefined at the sonic line (c1_at_sonic = false).
TypeChangeFn make_sgn();

struct TypeChangeViolation {
  std::string condition;  // "zero-at-origin" or "sign"
  double x;
  std::string detail;
};

struct ValidationReport {
  bool admissible = false;
  std::vector<TypeChangeViolation> violations;
  bool flagged_non_c1 = false;       // informational, never rejects
  bool flagged_non_monotone = false; // informational: breaks the characteristic graph property
  int samples = 0;
};

// Samples K on [xmin, xmax] (n points plus x = 0) and checks the admissibility
// conditions; regularity and monotonicity produce flags only.
ValidationReport validate(const TypeChangeFn& K, double xmin, double xmax, int n);

}  // namespace keldysh
