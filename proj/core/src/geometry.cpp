#include "keldysh/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

namespace keldysh {

namespace {

constexpr double kTiny = 1e-14;

// Slope magnitude sqrt(-K(x)); negative radicand reported through *ok.
double slope(const TypeChangeFn& K, double x, bool* ok) {
  const double r = -K.eval(x);
  if (r < 0.0) {
    *ok = false;
    return 0.0;
  }
  return std::sqrt(r);
}

// Exact y-distance from x < 0 to the sonic line along a characteristic:
// integral of ds / sqrt(-K(s)), regularized by s = -t^2 so the integrand
// 2t / sqrt(-K(-t^2)) stays smooth when K'(0) > 0. Returns +inf when the
// refinement does not settle (the integral diverges, e.g. K ~ x^3).
double sonic_gap(const TypeChangeFn& K, double x) {
  if (!(x < 0.0)) return 0.0;
  const double t1 = std::sqrt(-x);
  const double kp0 = K.deriv1(0.0);
  auto f = [&](double t) {
    if (t == 0.0) return (kp0 > 0.0) ? 2.0 / std::sqrt(kp0) : 0.0;
    const double r = -K.eval(-t * t);
    if (!(r > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return 2.0 * t / std::sqrt(r);
  };
  auto simpson = [&](int n) {
    const double h = t1 / n;
    double s = f(0.0) + f(t1);
    for (int i = 1; i < n; ++i) s += f(i * h) * ((i % 2) ? 4.0 : 2.0);
    return s * h / 3.0;
  };
  const double c1 = simpson(64);
  const double c2 = simpson(128);
  if (!std::isfinite(c2) || std::abs(c2 - c1) > 1e-9 * std::max(1.0, std::abs(c2))) {
    return std::numeric_limits<double>::infinity();
  }
  return (16.0 * c2 - c1) / 15.0;
}

}  // namespace

CharacteristicPath trace_characteristic(const TypeChangeFn& K, Point start, Branch branch,
                                        double y_stop, const TraceOptions& opt) {
  if (!(opt.step > 0.0)) throw TraceError("trace_characteristic: step must be positive");
  const double k0 = K.eval(start.x);
  if (k0 > 0.0) throw TraceError("trace_characteristic: start lies in the elliptic region");

  CharacteristicPath path;
  path.branch = branch;
  path.vertices.push_back(start);
  if (std::abs(start.y - y_stop) <= kTiny) return path;

  const double dir = (y_stop > start.y) ? 1.0 : -1.0;
  const double sgn = (branch == Branch::plus) ? 1.0 : -1.0;

  if (std::abs(start.x) <= opt.sonic_tol && std::abs(k0) <= kTiny) {
    // Started on the sonic line: the path degenerates to a vertical segment.
    path.degenerate = true;
    path.reached_sonic = true;
    double y = start.y;
    while ((y_stop - y) * dir > kTiny) {
      y += dir * std::min(opt.step, std::abs(y_stop - y));
      path.vertices.push_back({0.0, y});
    }
    return path;
  }

  double x = start.x;
  double y = start.y;
  double h = opt.step;                       // current step size, only shrinks
  const double h_min = opt.step * 0x1p-46;   // exhausting this pins the terminal
  const std::size_t max_vertices = 50'000'000;

  while (true) {
    const double remaining = (y_stop - y) * dir;
    if (remaining <= kTiny) break;
    const double hs = dir * std::min(h, remaining);

    // RK4 loses accuracy fast once the step is no longer small against the
    // relaxation scale sqrt(-K)/|K'| of the square-root approach, so treat
    // that as a failed step before any stage probes across the sonic line.
    bool ok = true;
    double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
    const double fx = slope(K, x, &ok);
    // x == 0 is exempt: the path rides the sonic line (slope 0), which is the
    // correct continuation once roundoff pins the position there.
    const bool stiff = ok && x != 0.0 && opt.stiffness_guard > 0.0 &&
                       std::abs(hs) * std::abs(K.deriv1(x)) > 2.0 * opt.stiffness_guard * fx;
    if (ok && !stiff) {
      k1 = sgn * fx;
      k2 = sgn * slope(K, x + 0.5 * hs * k1, &ok);
      k3 = sgn * slope(K, x + 0.5 * hs * k2, &ok);
      k4 = sgn * slope(K, x + hs * k3, &ok);
    }
    if (!ok || stiff) {
      // Terminal approach: the remaining run to the sonic line is a separable
      // integral, so land there by quadrature while the marched position is
      // still accurate. A gap beyond y_stop means the path ends before the
      // sonic line; then halving the step is the correct response (it also
      // resolves stiffness away from the sonic line, where the gap is +inf).
      const double gap = sonic_gap(K, x);
      if (gap <= remaining + kTiny) {
        const double kp0 = K.deriv1(0.0);
        if (kp0 > 0.0) {
          // Fill the landing leg with vertices from the local model
          // K ~ K'(0) x so arc consumers see a uniform sampling density.
          for (int q = 7; q >= 1; --q) {
            const double rem_q = gap * q / 8.0;
            const double xq = -kp0 * (0.5 * rem_q) * (0.5 * rem_q);
            if (xq > x) path.vertices.push_back({xq, y + dir * (gap - rem_q)});
          }
        }
        y += dir * gap;
        path.vertices.push_back({0.0, y});
        path.reached_sonic = true;
        return path;
      }
      h *= 0.5;
      if (h >= h_min) continue;
      if (std::abs(x) <= opt.sonic_tol) {
        // Step collapse pinned against the sonic line without a usable
        // landing integral; report the stall position as the terminal.
        path.reached_sonic = true;
        if (path.vertices.back().y != y) path.vertices.push_back({x, y});
        path.vertices.back().x = 0.0;
        return path;
      }
      throw StepFailure("trace_characteristic: step collapse away from the sonic line");
    }
    x += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    y += hs;
    if (x > 0.0) x = 0.0;  // roundoff guard; the flow cannot cross the sonic line
    path.vertices.push_back({x, y});
    if (std::abs(x) > opt.blowup_x) {
      path.diverged = true;
      return path;
    }
    if (path.vertices.size() >= max_vertices) {
      throw StepFailure("trace_characteristic: vertex budget exhausted");
    }
  }

  path.reached_sonic = (x == 0.0);
  return path;
}

double solve_apex(const TypeChangeFn& K, double a, double b, const TraceOptions& opt) {
  if (!(a <= 0.0)) throw std::invalid_argument("solve_apex: requires a <= 0");
  if (!(b > 0.0)) throw std::invalid_argument("solve_apex: requires b > 0");

  // g(m) = x(-b) - a for the descending characteristic from (m, 0); paths that
  // hit the sonic line or degenerate before y = -b sit to the right (g > 0),
  // diverging paths to the left (g < 0).
  auto g = [&](double m) {
    CharacteristicPath p = trace_characteristic(K, {m, 0.0}, Branch::minus, -b, opt);
    if (p.degenerate) return 1.0;
    if (p.diverged) return -1.0;
    if (p.reached_sonic && p.vertices.back().y > -b + 1e-12) return 1.0;
    return p.vertices.back().x - a;
  };

  double lo = a - 4.0 * (b * b + 1.0);
  double hi = a;
  double glo = g(lo);
  if (glo > 0.0) throw ApexError("solve_apex: no sign change in the bracket");
  if (glo == 0.0) return lo;
  if (!(g(hi) > 0.0)) throw ApexError("solve_apex: bracket right endpoint not on the short side");

  // Keep g(lo) <= 0 < g(hi); the left endpoint always yields a path reaching y = -b.
  while (hi - lo > 1e-11 * std::max(1.0, std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (gm > 0.0) {
      hi = mid;
    } else {
      lo = mid;
      if (gm == 0.0) break;
    }
  }
  if (std::abs(g(lo)) > 1e-8) {
    throw ApexError("solve_apex: bisection stalled before the terminal tolerance");
  }
  return lo;
}

double MixedDomain::left_boundary_x(double y) const {
  if (lb_y.empty()) throw std::logic_error("MixedDomain: left boundary table not built");
  if (y <= lb_y.front()) return lb_x.front();
  if (y >= lb_y.back()) return lb_x.back();
  const auto it = std::upper_bound(lb_y.begin(), lb_y.end(), y);
  const std::size_t k = static_cast<std::size_t>(it - lb_y.begin());
  const double y0 = lb_y[k - 1], y1 = lb_y[k];
  const double t = (y - y0) / (y1 - y0);
  return lb_x[k - 1] + t * (lb_x[k] - lb_x[k - 1]);
}

const Arc& MixedDomain::arc(const std::string& name) const {
  for (const Arc& s : arcs) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("MixedDomain: no arc named " + name);
}

namespace {

// The left boundary table is rebuilt from the stored Gamma arcs so that a
// domain read back from JSON classifies points identically.
void build_left_table(MixedDomain& dom) {
  dom.lb_y.clear();
  dom.lb_x.clear();
  const Arc& g1 = dom.arc("Gamma1");  // (m, 0) -> (a, -b), y descending
  const Arc& g2 = dom.arc("Gamma2");  // (a, b) -> (m, 0), y descending (stored reversed)
  for (auto it = g1.vertices.rbegin(); it != g1.vertices.rend(); ++it) {
    dom.lb_y.push_back(it->y);
    dom.lb_x.push_back(it->x);
  }
  for (auto it = g2.vertices.rbegin(); it != g2.vertices.rend(); ++it) {
    if (!dom.lb_y.empty() && it->y <= dom.lb_y.back() + 1e-15) continue;
    dom.lb_y.push_back(it->y);
    dom.lb_x.push_back(it->x);
  }
}

}  // namespace

MixedDomain build_domain(const TypeChangeFn& K, double a, double b, double d,
                         const TraceOptions& opt) {
  if (!(a <= 0.0 && 0.0 < d && b > 0.0)) {
    throw std::invalid_argument("build_domain: requires a <= 0 < d and b > 0");
  }
  MixedDomain dom;
  dom.a = a;
  dom.b = b;
  dom.d = d;
  dom.m = solve_apex(K, a, b, opt);

  CharacteristicPath g1 = trace_characteristic(K, {dom.m, 0.0}, Branch::minus, -b, opt);
  CharacteristicPath g2 = trace_characteristic(K, {dom.m, 0.0}, Branch::plus, b, opt);
  // The apex solve pins the terminals to within 1e-8 of (a, -+b); snap exactly.
  g1.vertices.back() = {a, -b};
  g2.vertices.back() = {a, b};

  Arc L1{"L1", {{a, -b}, {d, -b}}};
  Arc L2{"L2", {{d, -b}, {d, b}}};
  Arc L3{"L3", {{d, b}, {a, b}}};
  Arc G2{"Gamma2", {}};
  G2.vertices.assign(g2.vertices.rbegin(), g2.vertices.rend());
  Arc G1{"Gamma1", g1.vertices};

  dom.arcs = {std::move(L1), std::move(L2), std::move(L3), std::move(G2), std::move(G1)};
  build_left_table(dom);
  return dom;
}

PointClass classify_point(const MixedDomain& dom, Point p, double boundary_tol) {
  const double tol = boundary_tol;
  if (p.y > dom.b + tol || p.y < -dom.b - tol) return PointClass::exterior;
  if (p.x > dom.d + tol) return PointClass::exterior;

  const double yc = std::clamp(p.y, -dom.b, dom.b);
  const double xl = dom.left_boundary_x(yc);
  // Scale the lateral tolerance by the local boundary slope so the test is a
  // distance test rather than a horizontal one.
  double slope_scale = 1.0;
  {
    const double dy = 1e-6 * std::max(1.0, dom.b);
    const double x2 = dom.left_boundary_x(std::clamp(yc + dy, -dom.b, dom.b));
    const double x1 = dom.left_boundary_x(std::clamp(yc - dy, -dom.b, dom.b));
    slope_scale += std::abs(x2 - x1) / (2.0 * dy);
  }
  if (p.x < xl - tol * slope_scale) return PointClass::exterior;

  const bool on_l1 = std::abs(p.y + dom.b) <= tol && p.x >= dom.a - tol && p.x <= dom.d + tol;
  const bool on_l3 = std::abs(p.y - dom.b) <= tol && p.x >= dom.a - tol && p.x <= dom.d + tol;
  const bool on_l2 = std::abs(p.x - dom.d) <= tol;
  const bool on_gamma = std::abs(p.x - xl) <= tol * slope_scale;
  if (on_l1 || on_l2 || on_l3 || on_gamma) return PointClass::boundary;

  if (std::abs(p.x) <= 1e-9) return PointClass::sonic;
  return (p.x > 0.0) ? PointClass::elliptic : PointClass::hyperbolic;
}

std::string domain_to_json(const MixedDomain& dom) {
  nlohmann::json j;
  j["a"] = dom.a;
  j["b"] = dom.b;
  j["d"] = dom.d;
  j["m"] = dom.m;
  j["arcs"] = nlohmann::json::array();
  for (const Arc& s : dom.arcs) {
    nlohmann::json arc;
    arc["name"] = s.name;
    arc["vertices"] = nlohmann::json::array();
    for (const Point& v : s.vertices) {
      arc["vertices"].push_back({v.x, v.y});
    }
    j["arcs"].push_back(std::move(arc));
  }
  return j.dump(2);
}

MixedDomain domain_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MixedDomain dom;
  dom.a = j.at("a").get<double>();
  dom.b = j.at("b").get<double>();
  dom.d = j.at("d").get<double>();
  dom.m = j.at("m").get<double>();
  for (const auto& arc : j.at("arcs")) {
    Arc s;
    s.name = arc.at("name").get<std::string>();
    for (const auto& v : arc.at("vertices")) {
      s.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    }
    dom.arcs.push_back(std::move(s));
  }
  build_left_table(dom);
  return dom;
}

}  // namespace keldysh
