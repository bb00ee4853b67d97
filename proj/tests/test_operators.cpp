// Operator application: exactness on low-degree polynomials, the adjoint
// relation between drift normalizations, and the node-wise divergence
// identity residual.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "keldysh/operators.hpp"

using namespace keldysh;

namespace {

MixedDomain reference_domain() {
  return build_domain(make_power(1), 0.0, 2.0, 1.0);
}

// Max of |Lu - expected| over the valid nodes.
double worst_error(const GridField& f, const std::function<double(double, double)>& expected) {
  const GridSpec& s = f.spec();
  double worst = 0.0;
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i)
      if (f.is_valid(i, j))
        worst = std::max(worst, std::abs(f.at(i, j) - expected(s.x(i), s.y(j))));
  return worst;
}

}  // namespace

TEST_CASE("kappa form is exact on quadratic polynomials") {
  GeomPtr g = make_grid(reference_domain(), 33);
  const double kappa = 1.25;
  OperatorSpec op = OperatorSpec::kappa_form(kappa);

  // x (xy)_xx + (xy)_yy + kappa (xy)_x = kappa y
  GridField lu = apply(op, sample(g, [](double x, double y) { return x * y; }));
  CHECK(worst_error(lu, [&](double, double y) { return kappa * y; }) <= 1e-12);

  // x (x^2+y^2)_xx + (x^2+y^2)_yy + kappa (x^2+y^2)_x = 2 + 2(1+kappa) x
  GridField lv = apply(op, sample(g, [](double x, double y) { return x * x + y * y; }));
  CHECK(worst_error(lv, [&](double x, double) { return 2 + 2 * (1 + kappa) * x; }) <= 1e-12);
}

TEST_CASE("loword form with K = x reduces to the half-drift kappa form") {
  OperatorSpec lo = OperatorSpec::loword(make_power(1));
  OperatorSpec half = OperatorSpec::kappa_form(0.5);
  CHECK(lo.first_order(-0.7) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(lo.first_order(0.3) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(lo.k_factor() == doctest::Approx(0.5).epsilon(1e-14));

  GeomPtr g = make_grid(reference_domain(), 33);
  GridField u = sample(g, [](double x, double y) { return std::sin(x + 2 * y) + x * x; });
  GridField a = apply(lo, u);
  GridField b = apply(half, u);
  const GridSpec& s = g->spec;
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) {
      REQUIRE(a.is_valid(i, j) == b.is_valid(i, j));
      if (a.is_valid(i, j)) REQUIRE(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-14));
    }

  // cubic type change: K' = 3x^2, so the symmetric drift is 3x^2/2
  OperatorSpec cubic = OperatorSpec::loword(make_power(2));
  CHECK(cubic.first_order(-0.5) == doctest::Approx(1.5 * 0.25).epsilon(1e-12));
}

TEST_CASE("adjoint of the kappa form flips the drift coefficient") {
  OperatorSpec adj = adjoint_kappa(1.5);
  CHECK(adj.first_order(-0.4) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(adj.first_order(0.9) == doctest::Approx(0.5).epsilon(1e-14));

  GeomPtr g = make_grid(reference_domain(), 33);
  GridField u = sample(g, [](double x, double y) { return x * y * y + std::cos(x - y); });
  GridField a = apply(adj, u);
  GridField b = apply(OperatorSpec::kappa_form(0.5), u);
  const GridSpec& s = g->spec;
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) {
      REQUIRE(a.is_valid(i, j) == b.is_valid(i, j));
      if (a.is_valid(i, j)) REQUIRE(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-13));
    }

  // kappa = 1 is the fixed point of kappa -> 2 - kappa
  CHECK(adjoint_kappa(1.0).first_order(0.2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("multiplier application combines value and gradient terms") {
  GeomPtr g = make_grid(reference_domain(), 33);
  MultiplierSpec m;
  m.a = -1.0;
  m.b = [](double x, double) { return 1.0 + x; };
  m.c = [](double, double y) { return 2.0 * y; };
  m.b_x = [](double, double) { return 1.0; };
  m.b_y = [](double, double) { return 0.0; };
  m.c_y = [](double, double) { return 2.0; };

  // M(xy) = -xy + (1+x) y + 2y x = y + 2xy
  GridField mu = apply_multiplier(m, sample(g, [](double x, double y) { return x * y; }));
  CHECK(worst_error(mu, [](double x, double y) { return y + 2 * x * y; }) <= 1e-12);
}

TEST_CASE("sign-function type change invalidates the drift on the sonic column") {
  MixedDomain dom = build_domain(make_sgn(), -0.5, 1.0, 1.0);
  GeomPtr g = make_grid(dom, 21);
  REQUIRE(g->sonic_col >= 0);
  GridField u = sample(g, [](double x, double y) { return x * x + y * y; });
  GridField lu = apply(OperatorSpec::loword(make_sgn()), u);

  const int jmid = g->spec.ny / 2;
  CHECK_FALSE(lu.is_valid(g->sonic_col, jmid));
  CHECK(lu.is_valid(g->sonic_col - 1, jmid));
  CHECK(lu.is_valid(g->sonic_col + 1, jmid));
  // away from the sonic column the operator is plain Laplace plus nothing odd
  CHECK(lu.at(g->sonic_col + 2, jmid) == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("divergence identity residual shrinks at second order") {
  TypeChangeFn K = make_power(1);
  MixedDomain dom = reference_domain();
  auto ufn = [](double x, double y) { return std::sin(2 * x) * std::cos(y); };

  double err[3] = {0, 0, 0};
  int idx = 0;
  for (int n : {33, 65, 129}) {
    GeomPtr g = make_grid(dom, n);
    GridField u = sample(g, ufn);
    GridField r = divergence_identity_residual(K, u);
    const GridSpec& s = g->spec;
    int valid_count = 0, active_count = 0;
    for (int j = 0; j < s.ny; ++j)
      for (int i = 0; i < s.nx; ++i) {
        if (g->active(i, j)) ++active_count;
        if (!r.is_valid(i, j)) continue;
        ++valid_count;
        err[idx] = std::max(err[idx], std::abs(r.at(i, j)));
        // residual nodes sit strictly inside: the full radius-2 box is active
        if (valid_count == 1 || i == s.nx - 3) {
          for (int dj = -2; dj <= 2; ++dj)
            for (int di = -2; di <= 2; ++di) REQUIRE(g->active(i + di, j + dj));
        }
      }
    CHECK(valid_count > 0);
    CHECK(valid_count < active_count);
    ++idx;
  }
  const double slope1 = std::log2(err[0] / err[1]);
  const double slope2 = std::log2(err[1] / err[2]);
  CHECK(slope1 >= 1.9);
  CHECK(slope2 >= 1.9);
}

TEST_CASE("residual vanishes identically for a closed-form kernel element") {
  // u = y^2 - 4x solves x u_xx + u_x / 2 + u_yy = 0 and is quadratic, so
  // every difference quotient is exact and the residual is roundoff.
  TypeChangeFn K = make_power(1);
  GeomPtr g = make_grid(reference_domain(), 33);
  GridField u = sample(g, [](double x, double y) { return y * y - 4 * x; });
  GridField r = divergence_identity_residual(K, u);
  CHECK(worst_error(r, [](double, double) { return 0.0; }) <= 1e-10);
}
