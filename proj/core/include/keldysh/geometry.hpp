#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "keldysh/type_change.hpp"

namespace keldysh {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class Branch { plus, minus };

// Characteristic curves of K u_xx + u_yy + ... solve dx = +-sqrt(-K(x)) dy and
// live in the closed half-plane x <= 0. y is strictly monotone along a path.
struct CharacteristicPath {
  std::vector<Point> vertices;
  Branch branch = Branch::plus;
  bool reached_sonic = false;  // halted on x = 0 before reaching y_stop
  bool degenerate = false;     // started on the sonic line; path stays on it
  bool diverged = false;       // escaped toward x = -inf before reaching y_stop
};

struct TraceOptions {
  double step = 1e-3;        // fixed RK4 step in y (terminal approach refines internally)
  double sonic_tol = 1e-9;   // |x| below this counts as the sonic line
  double blowup_x = 1e9;     // |x| beyond this counts as divergence
  // A step is rejected when step * |K'| / (2 sqrt(-K)) exceeds this, which
  // hands the terminal approach to the quadrature landing while the marched
  // position is still accurate. 0 disables the guard (pure fixed-step RK4).
  double stiffness_guard = 0.05;
};

struct TraceError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct StepFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ApexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// RK4 with fixed step in y; near the sonic line the step is halved until the
// radicand stays nonnegative, so the terminal vertex lands on x = 0 to within
// roundoff rather than sonic_tol. Throws TraceError when K(start.x) > 0 and
// StepFailure when a negative radicand appears away from the sonic line.
CharacteristicPath trace_characteristic(const TypeChangeFn& K, Point start, Branch branch,
                                        double y_stop, const TraceOptions& opt = {});

// Apex abscissa m < a of the characteristic triangle: the path from (m, 0)
// reaches (a, -b). Bisection over [a - 4(b^2+1), a]; the returned m satisfies
// |x(-b) - a| <= 1e-8. Throws ApexError when the bracket has no sign change.
double solve_apex(const TypeChangeFn& K, double a, double b, const TraceOptions& opt = {});

struct Arc {
  std::string name;  // "L1", "L2", "L3", "Gamma2", "Gamma1"
  std::vector<Point> vertices;
};

// Mixed elliptic-hyperbolic domain bounded by the straight arcs
//   L1: y = -b, a <= x <= d;  L2: x = d, |y| <= b;  L3: y = b, a <= x <= d
// and the characteristic arcs Gamma1 ((m,0) to (a,-b)) and Gamma2 ((m,0) to (a,b)).
// Arcs are stored counterclockwise: L1, L2, L3, Gamma2 (descending from (a,b)),
// Gamma1 (descending to (a,-b)).
struct MixedDomain {
  double a = 0.0, b = 0.0, d = 0.0, m = 0.0;
  std::vector<Arc> arcs;

  // Left boundary abscissa at height y (the characteristic graph); |y| > b is clamped.
  double left_boundary_x(double y) const;

  const Arc& arc(const std::string& name) const;

  // Internal: ascending-y table of the left boundary, filled by build_domain/from_json.
  std::vector<double> lb_y, lb_x;
};

// Requires m < a <= 0 < d and b > 0 after the apex solve; K admissible.
MixedDomain build_domain(const TypeChangeFn& K, double a, double b, double d,
                         const TraceOptions& opt = {});

enum class PointClass { elliptic, hyperbolic, sonic, boundary, exterior };

PointClass classify_point(const MixedDomain& dom, Point p, double boundary_tol = 1e-8);

// JSON document {a, b, d, m, arcs: [{name, vertices: [[x, y], ...]}, ...]}.
std::string domain_to_json(const MixedDomain& dom);
MixedDomain domain_from_json(const std::string& text);

}  // namespace keldysh
