// Multiplier construction, pointwise certificates, the integration-by-parts
// identity, the energy chain, and the empirical weighted Poincare sweep.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "keldysh/abc_method.hpp"
#include "keldysh/bump.hpp"
#include "keldysh/rng.hpp"

using namespace keldysh;

namespace {

MixedDomain reference_domain() {
  return build_domain(make_power(1), 0.0, 2.0, 1.0);
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

TEST_CASE("multiplier shrinks delta until the certificates hold") {
  MixedDomain dom = reference_domain();
  MultiplierSpec m = make_multiplier(dom, 1.5);

  // starts from 1/4 and halves three times on this domain
  CHECK(m.delta == doctest::Approx(0.03125).epsilon(1e-14));
  CHECK(m.shrink_count == 3);
  CHECK(m.kappa == doctest::Approx(1.5));
  CHECK(m.mu1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.mu2 == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(m.Q1 == doctest::Approx(std::exp(2 * m.delta * m.mu1)).epsilon(1e-12));
  CHECK(m.Q2 == doctest::Approx(std::exp(m.mu2)).epsilon(1e-9));
  CHECK(3 * m.delta < m.Q2);
  CHECK_FALSE(m.omega_minus_empty);
  CHECK(m.a == -1.0);

  // b is continuous across x = 0 and keeps the right-branch slope there
  CHECK(m.b(1e-12, 0.3) == doctest::Approx(m.b(-1e-12, 0.3)).epsilon(1e-9));
  CHECK(m.b_x(0.0, 0.3) == doctest::Approx(2 * m.delta / m.Q1).epsilon(1e-12));
  CHECK(m.b_x(-1e-12, 0.3) == doctest::Approx(3 * m.delta / m.Q2).epsilon(1e-6));

  // an explicit cap below the automatic value is honored as-is
  MultiplierSpec capped = make_multiplier(dom, 1.0, 0.01);
  CHECK(capped.delta == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(capped.shrink_count == 0);

  // a rectangle in x >= 0 never reaches the hyperbolic side
  MultiplierSpec mr = make_multiplier(Rect{0.0, 1.0, -1.0, 1.0}, 1.25);
  CHECK(mr.omega_minus_empty);
  CHECK(mr.delta == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("certificates hold on the sweep and on grid nodes") {
  MixedDomain dom = reference_domain();
  MultiplierSpec m = make_multiplier(dom, 1.5);

  CertificateReport sweep = check_certificates(m);
  CHECK(sweep.ok);
  CHECK(sweep.failures.empty());
  // alpha - delta |x| is tight at the sonic line, so the margin sits at zero
  CHECK(sweep.min_alpha_margin >= -1e-10);
  CHECK(sweep.min_b >= 0.7);
  CHECK(sweep.min_gamma >= 1.9);
  CHECK(m.eps == doctest::Approx(sweep.min_gamma).epsilon(1e-6));

  CertificateReport grid = check_certificates(m, make_grid(dom, 33));
  CHECK(grid.ok);
  CHECK(grid.min_alpha_margin >= -1e-12);
  CHECK(grid.min_b >= 0.7);
  CHECK(grid.min_gamma >= 1.9);
}

TEST_CASE("integration by parts identity closes at second order on the domain") {
  MixedDomain dom = reference_domain();
  MultiplierSpec m = make_multiplier(dom, 1.5);
  OperatorSpec op = adjoint_kappa(1.5);
  auto ufn = [](double x, double y) {
    return std::sin(1.3 * x - 0.4) * std::cos(0.9 * y) + 0.3 * x * y;
  };

  double rel[3];
  int idx = 0;
  for (int n : {33, 65, 129}) {
    IbpReport r = verify_ibp(op, m, dom, n, ufn);
    CHECK(r.scale > 0.0);
    CHECK(r.gap == doctest::Approx(std::abs(r.lhs - r.boundary - r.area)).epsilon(1e-12));
    rel[idx++] = r.gap / r.scale;
  }
  CHECK(rel[0] <= 2e-2);
  CHECK(std::log2(rel[0] / rel[1]) >= 1.9);
  CHECK(std::log2(rel[1] / rel[2]) >= 1.9);
}

TEST_CASE("integration by parts identity closes at second order on a rectangle") {
  Rect rect{0.0, 1.0, -1.0, 1.0};
  MultiplierSpec m = make_multiplier(rect, 1.5);
  OperatorSpec op = adjoint_kappa(1.5);
  auto ufn = [](double x, double y) {
    return std::sin(1.3 * x - 0.4) * std::cos(0.9 * y) + 0.3 * x * y;
  };

  double rel[3];
  int idx = 0;
  for (int n : {33, 65, 129}) {
    IbpReport r = verify_ibp(op, m, rect, n, 2 * n - 1, ufn);
    rel[idx++] = r.gap / r.scale;
  }
  CHECK(rel[0] <= 1e-3);
  CHECK(std::log2(rel[0] / rel[1]) >= 1.9);
  CHECK(std::log2(rel[1] / rel[2]) >= 1.9);
}

TEST_CASE("energy chain holds for a compactly supported state") {
  MixedDomain dom = reference_domain();
  MultiplierSpec m = make_multiplier(dom, 1.5);
  GeomPtr g = make_grid(dom, 65);

  Rng rng(42);
  TensorBump bumps[3];
  for (auto& b : bumps) {
    b.cx = rng.uniform(-0.3, 0.5);
    b.cy = rng.uniform(-0.6, 0.6);
    b.rx = rng.uniform(0.15, 0.3);
    b.ry = rng.uniform(0.3, 0.6);
    b.amp = rng.uniform(0.5, 2.0);
  }
  GridField u = sample(g, [&](double x, double y) {
    double v = 0;
    for (const auto& b : bumps) v += b.value(x, y);
    return v;
  });

  EnergyReport er = energy_inequality_check(1.5, m, u);
  CHECK(er.chain_ok);
  CHECK(er.link1 > 0.0);
  CHECK(er.link1 <= er.link2 + er.tol);
  CHECK(er.link2 <= er.link3 + er.tol);
  CHECK(er.delta_prime == doctest::Approx(std::min(m.delta, m.eps)).epsilon(1e-14));
  CHECK(er.constant == doctest::Approx(1.0 / er.delta_prime).epsilon(1e-14));
  CHECK(er.seminorm_sq > 0.0);
  CHECK(er.l2_sq > 0.0);
  CHECK(er.link1 == doctest::Approx(er.delta_prime * er.seminorm_sq).epsilon(1e-12));

  // the report serializes with the chain values intact
  auto j = nlohmann::json::parse(energy_report_json(er));
  CHECK(j.at("links").at("coercivity").get<double>() == doctest::Approx(er.link1).epsilon(1e-12));
  CHECK(j.at("links").at("pairing").get<double>() == doctest::Approx(er.link2).epsilon(1e-12));
  CHECK(j.at("links").at("cauchy_schwarz").get<double>() ==
        doctest::Approx(er.link3).epsilon(1e-12));
  CHECK(j.at("chain_ok").get<bool>());

  // a state touching the boundary is rejected
  GridField bad = sample(g, [](double x, double y) { return x * y + 1.0; });
  CHECK_THROWS_AS((void)energy_inequality_check(1.5, m, bad), std::invalid_argument);
}

TEST_CASE("weighted ratio helpers reproduce the separable closed form") {
  // For u = sin(pi x) sin(pi y) on the unit square with K = x the ratio
  // ||u||^2 / (x u_x^2 + u_y^2) is exactly 2 / (3 pi^2).
  TypeChangeFn K = make_power(1);
  GeomPtr gs = make_grid(Rect{0.0, 1.0, 0.0, 1.0}, 65, 65);
  GridField u = sample(gs, [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); });
  GridField ux = sample(gs, [](double x, double y) { return kPi * std::cos(kPi * x) * std::sin(kPi * y); });
  GridField uy = sample(gs, [](double x, double y) { return kPi * std::sin(kPi * x) * std::cos(kPi * y); });
  const double ratio = l2_sq(u) / weighted_h10_sq(K, ux, uy);
  CHECK(ratio == doctest::Approx(2.0 / (3.0 * kPi * kPi)).epsilon(1e-4));
}

TEST_CASE("empirical weighted Poincare sweep is grid stable and deterministic") {
  TypeChangeFn K = make_power(1);
  Rect rect{0.0, 1.0, -1.0, 1.0};

  PoincareResult r33 = poincare_constant(K, rect, 33, 65, 24, 42);
  PoincareResult r65 = poincare_constant(K, rect, 65, 129, 24, 42);
  REQUIRE(r33.trial_ratios.size() == 24);
  CHECK(r33.best_ratio > 0.0);
  for (double t : r33.trial_ratios) CHECK(t <= r33.best_ratio + 1e-15);

  // the ratio is a smooth functional of the trial states: refining the grid
  // moves it by far less than one percent
  CHECK(std::abs(r65.best_ratio - r33.best_ratio) / r33.best_ratio <= 0.01);

  // bump superpositions stay below the separable benchmark 2 / (3 pi^2)
  CHECK(r33.best_ratio < 2.0 / (3.0 * kPi * kPi));

  PoincareResult again = poincare_constant(K, rect, 33, 65, 24, 42);
  CHECK(again.best_ratio == r33.best_ratio);
  PoincareResult other = poincare_constant(K, rect, 33, 65, 24, 7);
  CHECK(other.best_ratio != r33.best_ratio);
}
