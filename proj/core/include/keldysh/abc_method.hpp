#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keldysh/grid.hpp"
#include "keldysh/multiplier.hpp"
#include "keldysh/operators.hpp"

namespace keldysh {

// Multiplier family for the adjoint operators x u_xx + (2 - kappa) u_x + u_yy
// with kappa in [1, 3/2]:
//   a = -1
//   b = b1(x) + (2 delta - 1)(1 - kappa) y^2,
//       b1 = exp(2 delta x / Q1) on x >= 0,  exp(3 delta x / Q2) on x < 0
//   c = 2 (2 delta - 1) y
// with Q1 = exp(2 delta mu1), Q2 = exp(mu2), mu1 = max x, mu2 = min x.
//
// delta_request > 0 is an upper bound on delta; pass 0 to start from 1/4.
// delta is halved (Q1 recomputed) until delta < 1/2, 3 delta < Q2 when the
// region reaches x < 0, the gradient-term certificates below hold, and the
// u_y^2 coefficient stays positive. Throws std::runtime_error when 40 halvings
// do not get there (possible only when min x is in (-ln 2, 0)).
MultiplierSpec make_multiplier(const MixedDomain& dom, double kappa, double delta_request = 0.0);
MultiplierSpec make_multiplier(const Rect& rect, double kappa, double delta_request = 0.0);

// Certificates behind the energy inequality, checked pointwise:
//   alpha(x, y) >= delta |x|,   b(x, y) > 0,   gamma(x, y) >= eps > 0.
struct CertificateReport {
  bool ok = false;
  double min_alpha_margin = 0.0;  // min of alpha - delta |x|
  double min_b = 0.0;
  double min_gamma = 0.0;
  std::vector<std::string> failures;
};
// Dense 1D sweep in x at the worst y (the certificates are monotone in y^2).
CertificateReport check_certificates(const MultiplierSpec& m);
// Node-wise sweep over the active nodes of a grid.
CertificateReport check_certificates(const MultiplierSpec& m, const GeomPtr& geom);

// Coefficients of the quadratic form in the integration-by-parts identity
//   (Mu, Lu) = loop(F dy - G dx) + area(omega u^2 + alpha u_x^2
//                                       + 2 beta u_x u_y + gamma u_y^2)
// for L = K u_xx + k K' u_x + u_yy:
//   omega = (1 - k)(a / 2) K''
//   alpha = [c_y / 2 - (a + b_x / 2)] K + b (k - 1/2) K'
//   beta  = [c (k - 1) K' - b_y] / 2
//   gamma = (b_x - c_y) / 2 - a
struct IbpCoefficients {
  std::function<double(double, double)> omega, alpha, beta, gamma;
};
IbpCoefficients ibp_coefficients(const TypeChangeFn& K, double k, const MultiplierSpec& m);

// Numerical verification of the identity on one grid: lhs from the operator
// side, boundary from the loop integral of
//   F = a u K u_x + (a (k-1)/2) K' u^2 + (b/2)(K u_x^2 - u_y^2) + c K u_x u_y
//   G = a u u_y + b u_x u_y + (c/2)(u_y^2 - K u_x^2)
// and area from the quadratic form. gap should shrink at second order.
struct IbpReport {
  double lhs = 0.0;
  double boundary = 0.0;
  double area = 0.0;
  double gap = 0.0;
  double scale = 1.0;
  int nx = 0, ny = 0;
  double h = 0.0;
};
IbpReport verify_ibp(const OperatorSpec& op, const MultiplierSpec& m, const MixedDomain& dom,
                     int n, const std::function<double(double, double)>& u_fn);
IbpReport verify_ibp(const OperatorSpec& op, const MultiplierSpec& m, const Rect& rect, int nx,
                     int ny, const std::function<double(double, double)>& u_fn);

// Energy chain for a compactly supported u (must vanish within three cells of
// any inactive node; throws otherwise):
//   link1 = delta' (|K| u_x^2 + u_y^2)   <=   link2 = <Mu, L* u>
//        <=   link3 = ||Mu|| ||L* u||,       delta' = min(delta, eps).
struct EnergyReport {
  double seminorm_sq = 0.0;
  double l2_sq = 0.0;
  double link1 = 0.0, link2 = 0.0, link3 = 0.0;
  double delta_prime = 0.0;
  double constant = 0.0;  // 1 / delta', the certified stability constant
  bool chain_ok = false;
  double tol = 0.0;
  int nx = 0, ny = 0;
  double hx = 0.0, hy = 0.0;
};
EnergyReport energy_inequality_check(double kappa, const MultiplierSpec& m, const GridField& u);
std::string energy_report_json(const EnergyReport& rep);

// Weighted seminorm and L2 helpers (integrals, not plain node sums).
double weighted_h10_sq(const TypeChangeFn& K, const GridField& ux, const GridField& uy,
                       Region region = Region::all);
double l2_sq(const GridField& u, Region region = Region::all);

// Empirical weighted Poincare ratio ||u||^2 / (|K| u_x^2 + u_y^2) maximized
// over `trials` random three-bump superpositions with analytic derivatives.
struct PoincareResult {
  double best_ratio = 0.0;
  std::vector<double> trial_ratios;
};
PoincareResult poincare_constant(const TypeChangeFn& K, const Rect& rect, int nx, int ny,
                                 int trials, std::uint64_t seed);

}  // namespace keldysh
