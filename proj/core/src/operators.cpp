#include "keldysh/operators.hpp"

#include <cmath>

namespace keldysh {

OperatorSpec OperatorSpec::loword(TypeChangeFn K) {
  OperatorSpec op;
  op.form = OperatorForm::loword;
  op.K = std::move(K);
  return op;
}

OperatorSpec OperatorSpec::kappa_form(double kappa) {
  if (!(kappa >= 0.0 && kappa <= 1.5)) {
    throw std::invalid_argument("OperatorSpec: kappa must lie in [0, 3/2]");
  }
  OperatorSpec op;
  op.form = OperatorForm::kappa;
  op.K = make_power(1);
  op.kappa = kappa;
  return op;
}

OperatorSpec OperatorSpec::general(TypeChangeFn K, double k) {
  OperatorSpec op;
  op.form = OperatorForm::general;
  op.K = std::move(K);
  op.k = k;
  return op;
}

double OperatorSpec::first_order(double x) const {
  switch (form) {
    case OperatorForm::loword:
      return 0.5 * K.deriv1(x);
    case OperatorForm::kappa:
      return kappa;
    case OperatorForm::general:
      return k * K.deriv1(x);
  }
  return 0.0;
}

double OperatorSpec::k_factor() const {
  switch (form) {
    case OperatorForm::loword:
      return 0.5;
    case OperatorForm::kappa:
      return kappa;  // K = x, so k K' = kappa
    case OperatorForm::general:
      return k;
  }
  return 0.0;
}

OperatorSpec adjoint_kappa(double kappa) {
  if (!(kappa >= 0.0 && kappa <= 1.5)) {
    throw std::invalid_argument("adjoint_kappa: kappa must lie in [0, 3/2]");
  }
  return OperatorSpec::kappa_form(2.0 - kappa);
}

GridField apply(const OperatorSpec& op, const GridField& u) {
  const GridField uxx = diff(u, Deriv::xx);
  const GridField uyy = diff(u, Deriv::yy);
  const GridField ux = diff(u, Deriv::x);
  GridField out = u;
  const GridSpec& s = u.spec();
  const bool needs_kprime =
      op.form != OperatorForm::kappa && !op.K.c1_at_sonic;
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      const bool ok = uxx.valid[k] && uyy.valid[k] && ux.valid[k] &&
                      !(needs_kprime && i == u.geom->sonic_col);
      if (!ok) {
        out.valid[k] = 0;
        out.values[k] = 0.0;
        continue;
      }
      const double x = s.x(i);
      out.values[k] = op.K.eval(x) * uxx.values[k] + op.first_order(x) * ux.values[k] +
                      uyy.values[k];
    }
  }
  return out;
}

GridField apply_multiplier(const MultiplierSpec& m, const GridField& u) {
  const GridField ux = diff(u, Deriv::x);
  const GridField uy = diff(u, Deriv::y);
  GridField out = u;
  const GridSpec& s = u.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      if (!(ux.valid[k] && uy.valid[k])) {
        out.valid[k] = 0;
        out.values[k] = 0.0;
        continue;
      }
      const double x = s.x(i);
      const double y = s.y(j);
      out.values[k] = m.a * u.values[k] + m.b(x, y) * ux.values[k] + m.c(x, y) * uy.values[k];
    }
  }
  return out;
}

GridField divergence_identity_residual(const TypeChangeFn& K, const GridField& u) {
  const GridField ux = diff(u, Deriv::x);
  const GridField uy = diff(u, Deriv::y);
  const GridSpec& s = u.spec();

  GridField xi_x = u;
  GridField xi_y = u;
  for (std::size_t k = 0; k < u.values.size(); ++k) {
    const bool ok = ux.valid[k] && uy.valid[k];
    xi_x.valid[k] = xi_y.valid[k] = ok ? 1 : 0;
    if (!ok) {
      xi_x.values[k] = xi_y.values[k] = 0.0;
      continue;
    }
    xi_x.values[k] = -2.0 * ux.values[k] * uy.values[k];
  }
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      if (!xi_y.valid[k]) continue;
      xi_y.values[k] = K.eval(s.x(i)) * ux.values[k] * ux.values[k] -
                       uy.values[k] * uy.values[k];
    }
  }

  const GridField dxi_x_dy = diff(xi_x, Deriv::y);
  const GridField dxi_y_dx = diff(xi_y, Deriv::x);
  const GridField lu = apply(OperatorSpec::loword(K), u);

  GridField res = u;
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      bool core = dxi_x_dy.valid[k] && dxi_y_dx.valid[k] && lu.valid[k] && ux.valid[k];
      for (int dj = -2; core && dj <= 2; ++dj) {
        for (int di = -2; core && di <= 2; ++di) {
          if (!u.geom->active(i + di, j + dj)) core = false;
        }
      }
      if (!core) {
        res.valid[k] = 0;
        res.values[k] = 0.0;
        continue;
      }
      res.values[k] = dxi_x_dy.values[k] - dxi_y_dx.values[k] +
                      2.0 * ux.values[k] * lu.values[k];
    }
  }
  return res;
}

}  // namespace keldysh
