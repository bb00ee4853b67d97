#pragma once

#include <stdexcept>

#include "keldysh/grid.hpp"
#include "keldysh/multiplier.hpp"
#include "keldysh/type_change.hpp"

namespace keldysh {

// The operator family K(x) u_xx + u_yy + lower order. Three first-order
// normalizations are supported:
//   loword:  + K'(x)/2 u_x            (the symmetric lower-order choice)
//   kappa:   K = x, + kappa u_x       (kappa in [0, 3/2])
//   general: + k K'(x) u_x            (k a free parameter)
enum class OperatorForm { loword, kappa, general };

struct OperatorSpec {
  OperatorForm form = OperatorForm::loword;
  TypeChangeFn K;
  double kappa = 1.0;  // kappa form only
  double k = 0.5;      // general form only

  static OperatorSpec loword(TypeChangeFn K);
  static OperatorSpec kappa_form(double kappa);
  static OperatorSpec general(TypeChangeFn K, double k);

  // First-order coefficient in front of u_x at abscissa x.
  double first_order(double x) const;
  // The general-form factor k equivalent to this spec (kappa form: K' = 1).
  double k_factor() const;
};

// Formal adjoint of the kappa form on functions vanishing at the boundary:
// x u_xx + (2 - kappa) u_x + u_yy.
OperatorSpec adjoint_kappa(double kappa);

// Second-order finite difference application; nodes whose stencils cannot be
// formed (or where K' is needed but undefined, as for the sign-function K on
// the sonic column) come back invalid.
GridField apply(const OperatorSpec& op, const GridField& u);

// M u = a u + b u_x + c u_y with the multiplier's coefficient closures.
GridField apply_multiplier(const MultiplierSpec& m, const GridField& u);

// Node-wise residual of the divergence identity
//   d/dy(xi_x) - d/dx(xi_y) + 2 u_x Lu = 0,  L the loword form,
// with xi_x = -2 u_x u_y and xi_y = K u_x^2 - u_y^2. The residual is reported
// only on nodes whose radius-2 neighborhood is active, so every stencil that
// enters is centered and the composition stays second order.
GridField divergence_identity_residual(const TypeChangeFn& K, const GridField& u);

}  // namespace keldysh
