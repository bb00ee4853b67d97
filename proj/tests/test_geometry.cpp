#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "keldysh/geometry.hpp"
#include "keldysh/rng.hpp"

using namespace keldysh;

namespace {

double shoelace(const MixedDomain& dom) {
  std::vector<Point> loop;
  for (const Arc& a : dom.arcs) {
    loop.insert(loop.end(), a.vertices.begin(), a.vertices.end());
  }
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < loop.size(); ++k) {
    s += loop[k].x * loop[k + 1].y - loop[k + 1].x * loop[k].y;
  }
  s += loop.back().x * loop.front().y - loop.front().x * loop.back().y;
  return 0.5 * s;
}

}  // namespace

TEST_CASE("plus-branch characteristic for K = x hits the sonic line at (0, 2)") {
  // Closed form from (-1, 0): sqrt(-x) = 1 - y/2, so x(y) = -(1 - y/2)^2 and
  // the path meets x = 0 at y = 2.
  const TypeChangeFn K = make_power(1);
  const CharacteristicPath p = trace_characteristic(K, {-1.0, 0.0}, Branch::plus, 3.0);
  CHECK(p.reached_sonic);
  CHECK_FALSE(p.degenerate);
  CHECK(std::abs(p.vertices.back().x - 0.0) <= 1e-6);
  CHECK(std::abs(p.vertices.back().y - 2.0) <= 1e-6);
  double worst = 0.0;
  for (const Point& v : p.vertices) {
    const double closed = -(1.0 - v.y / 2.0) * (1.0 - v.y / 2.0);
    worst = std::max(worst, std::abs(v.x - closed));
  }
  CHECK(worst <= 1e-8);
  for (std::size_t k = 0; k + 1 < p.vertices.size(); ++k) {
    CHECK(p.vertices[k + 1].y > p.vertices[k].y);
  }
}

TEST_CASE("minus branch mirrors downward") {
  const TypeChangeFn K = make_power(1);
  const CharacteristicPath p = trace_characteristic(K, {-1.0, 0.0}, Branch::minus, -3.0);
  CHECK(p.reached_sonic);
  CHECK(std::abs(p.vertices.back().x) <= 1e-6);
  CHECK(std::abs(p.vertices.back().y + 2.0) <= 1e-6);
}

TEST_CASE("sign-function characteristics are straight lines") {
  const TypeChangeFn K = make_sgn();
  const CharacteristicPath p = trace_characteristic(K, {-1.0, 0.0}, Branch::plus, 2.0);
  CHECK(p.reached_sonic);
  CHECK(std::abs(p.vertices.back().y - 1.0) <= 1e-6);
  for (const Point& v : p.vertices) {
    if (v.x < 0.0) CHECK(std::abs(v.x - (-1.0 + v.y)) <= 1e-9);
  }
}

TEST_CASE("trace rejects an elliptic start and flags a sonic start") {
  const TypeChangeFn K = make_power(1);
  CHECK_THROWS_AS(trace_characteristic(K, {0.5, 0.0}, Branch::plus, 1.0), TraceError);
  const CharacteristicPath p = trace_characteristic(K, {0.0, 0.5}, Branch::plus, 1.0);
  CHECK(p.degenerate);
  for (const Point& v : p.vertices) CHECK(v.x == 0.0);
  CHECK(std::abs(p.vertices.back().y - 1.0) <= 1e-12);
}

TEST_CASE("fixed-step refinement converges at fourth order") {
  // K = x^3 from (-1, 0) descending has (-x)^(-1/2) = 1 - y/2, so the path at
  // y = -2 sits at x = -1/4 exactly; no sonic approach is involved.
  const TypeChangeFn K = make_power(2);
  auto terminal = [&](double step) {
    TraceOptions opt;
    opt.step = step;
    opt.stiffness_guard = 0.0;  // pure fixed-step RK4 for the order study
    const CharacteristicPath p = trace_characteristic(K, {-1.0, 0.0}, Branch::minus, -2.0, opt);
    REQUIRE_FALSE(p.reached_sonic);
    return p.vertices.back().x;
  };
  const double e1 = std::abs(terminal(0.1) - (-0.25));
  const double e2 = std::abs(terminal(0.05) - (-0.25));
  const double e3 = std::abs(terminal(0.025) - (-0.25));
  if (e2 > 1e-13) CHECK(e1 / e2 >= 8.0);
  if (e3 > 1e-13) CHECK(e2 / e3 >= 8.0);
}

TEST_CASE("apex solve reproduces closed-form abscissas") {
  const TypeChangeFn K = make_power(1);
  // K = x: sqrt(-m) = b/2 + sqrt(-a).
  CHECK(std::abs(solve_apex(K, 0.0, 2.0) - (-1.0)) <= 1e-6);
  CHECK(std::abs(solve_apex(K, -0.25, 1.0) - (-1.0)) <= 1e-6);
  // K = sgn: slope one, so m = a - b.
  CHECK(std::abs(solve_apex(make_sgn(), 0.0, 1.0) - (-1.0)) <= 1e-6);
  // K = x^3: (-a)^(-1/2) = b/2 + (-m)^(-1/2), so a = -1, b = 1 gives m = -4.
  CHECK(std::abs(solve_apex(make_power(2), -1.0, 1.0) - (-4.0)) <= 1e-6);
  // For b >= 2 the backward characteristic through (-1, -b) never returns to
  // y = 0: every candidate lands right of a and the bracket has no sign change.
  CHECK_THROWS_AS(solve_apex(make_power(2), -1.0, 2.0), ApexError);
}

TEST_CASE("apex terminal lands within the pinned tolerance") {
  const TypeChangeFn K = make_power(1);
  Rng rng(7);
  for (int t = 0; t < 8; ++t) {
    const double a = -rng.uniform(0.0, 1.0);
    const double b = rng.uniform(0.5, 2.0);
    const double m = solve_apex(K, a, b);
    const double m_closed = -(b / 2.0 + std::sqrt(-a)) * (b / 2.0 + std::sqrt(-a));
    CHECK(std::abs(m - m_closed) <= 1e-6);
    const CharacteristicPath p = trace_characteristic(K, {m, 0.0}, Branch::minus, -b);
    CHECK(std::abs(p.vertices.back().x - a) <= 1e-8);
  }
}

TEST_CASE("domain assembly is a closed counterclockwise loop") {
  const TypeChangeFn K = make_power(1);
  const MixedDomain dom = build_domain(K, 0.0, 2.0, 1.0);
  CHECK(std::abs(dom.m - (-1.0)) <= 1e-6);
  REQUIRE(dom.arcs.size() == 5);
  CHECK(dom.arcs[0].name == "L1");
  CHECK(dom.arcs[1].name == "L2");
  CHECK(dom.arcs[2].name == "L3");
  CHECK(dom.arcs[3].name == "Gamma2");
  CHECK(dom.arcs[4].name == "Gamma1");
  for (std::size_t k = 0; k < dom.arcs.size(); ++k) {
    const Point& tail = dom.arcs[k].vertices.back();
    const Point& head = dom.arcs[(k + 1) % dom.arcs.size()].vertices.front();
    CHECK(std::abs(tail.x - head.x) <= 1e-8);
    CHECK(std::abs(tail.y - head.y) <= 1e-8);
  }
  // Area: elliptic box 4 plus hyperbolic lens 4/3.
  CHECK(shoelace(dom) > 0.0);
  CHECK(std::abs(shoelace(dom) - 16.0 / 3.0) <= 1e-4);
  CHECK(std::abs(dom.left_boundary_x(0.0) - dom.m) <= 1e-9);
  CHECK(std::abs(dom.left_boundary_x(2.0) - 0.0) <= 1e-9);
  CHECK(std::abs(dom.left_boundary_x(-2.0) - 0.0) <= 1e-9);
  CHECK(std::abs(dom.left_boundary_x(1.0) - (-0.25)) <= 1e-6);
}

TEST_CASE("point classification over the reference domain") {
  const MixedDomain dom = build_domain(make_power(1), 0.0, 2.0, 1.0);
  CHECK(classify_point(dom, {-0.9, 0.0}) == PointClass::hyperbolic);
  CHECK(classify_point(dom, {0.5, 0.0}) == PointClass::elliptic);
  CHECK(classify_point(dom, {0.0, 0.5}) == PointClass::sonic);
  CHECK(classify_point(dom, {1.0, 0.0}) == PointClass::boundary);
  CHECK(classify_point(dom, {0.5, -2.0}) == PointClass::boundary);
  CHECK(classify_point(dom, {-1.0, 0.0}) == PointClass::boundary);
  CHECK(classify_point(dom, {-1.5, 0.0}) == PointClass::exterior);
  CHECK(classify_point(dom, {-0.5, 1.9}) == PointClass::exterior);
  CHECK(classify_point(dom, {1.2, 0.0}) == PointClass::exterior);
  CHECK(classify_point(dom, {0.5, 2.4}) == PointClass::exterior);
  // On the characteristic arc: x(1) = -1/4 on the upper branch.
  CHECK(classify_point(dom, {-0.25, 1.0}, 1e-6) == PointClass::boundary);
}

TEST_CASE("domain JSON round trip") {
  const MixedDomain dom = build_domain(make_power(1), -0.25, 1.0, 1.0);
  const std::string text = domain_to_json(dom);
  const MixedDomain back = domain_from_json(text);
  CHECK(back.a == dom.a);
  CHECK(back.b == dom.b);
  CHECK(back.d == dom.d);
  CHECK(back.m == dom.m);
  REQUIRE(back.arcs.size() == dom.arcs.size());
  for (std::size_t k = 0; k < dom.arcs.size(); ++k) {
    CHECK(back.arcs[k].name == dom.arcs[k].name);
    CHECK(back.arcs[k].vertices.size() == dom.arcs[k].vertices.size());
  }
  CHECK(std::abs(back.left_boundary_x(0.3) - dom.left_boundary_x(0.3)) <= 1e-12);
  CHECK(classify_point(back, {-0.5, 0.0}) == classify_point(dom, {-0.5, 0.0}));
}
