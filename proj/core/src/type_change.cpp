#include "keldysh/type_change.hpp"

#include <cmath>
#include <stdexcept>

namespace keldysh {

namespace {

double ipow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

}  // namespace

TypeChangeFn make_power(int k0) {
  if (k0 < 1) throw std::invalid_argument("make_power: k0 must be a positive integer");
  const int p = 2 * k0 - 1;
  TypeChangeFn K;
  K.eval = [p](double x) { return ipow(x, p); };
  K.deriv1 = [p](double x) { return p * ipow(x, p - 1); };
  K.deriv2 = [p](double x) { return p == 1 ? 0.0 : double(p) * (p - 1) * ipow(x, p - 2); };
  K.name = "power:" + std::to_string(k0);
  K.c1_at_sonic = true;
  return K;
}

TypeChangeFn make_sgn() {
  TypeChangeFn K;
  K.eval = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  K.deriv1 = [](double) { return 0.0; };
  K.deriv2 = [](double) { return 0.0; };
  K.name = "sgn";
  K.c1_at_sonic = false;
  return K;
}

ValidationReport validate(const TypeChangeFn& K, double xmin, double xmax, int n) {
  if (!(xmin < xmax) || n < 2) throw std::invalid_argument("validate: bad probe interval");
  constexpr double kZeroTol = 1e-12;

  ValidationReport rep;
  rep.flagged_non_c1 = !K.c1_at_sonic;

  const double k0v = K.eval(0.0);
  if (std::abs(k0v) > kZeroTol) {
    rep.violations.push_back({"zero-at-origin", 0.0,
                              "K(0) = " + std::to_string(k0v)});
  }

  double prev_neg_x = 0.0, prev_neg_val = 0.0;
  bool have_prev_neg = false;
  for (int i = 0; i < n; ++i) {
    const double x = xmin + (xmax - xmin) * i / (n - 1);
    const double v = K.eval(x);
    ++rep.samples;
    if (std::abs(x) > kZeroTol && x * v <= 0.0) {
      rep.violations.push_back({"sign", x, "x*K(x) = " + std::to_string(x * v)});
    }
    if (x < -kZeroTol) {
      if (have_prev_neg && x > prev_neg_x && v < prev_neg_val - kZeroTol) {
        rep.flagged_non_monotone = true;
      }
      prev_neg_x = x;
      prev_neg_val = v;
      have_prev_neg = true;
    }
  }
  rep.admissible = rep.violations.empty();
  return rep;
}

}  // namespace keldysh
