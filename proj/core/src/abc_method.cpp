#include "keldysh/abc_method.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "keldysh/bump.hpp"
#include "keldysh/rng.hpp"

namespace keldysh {

namespace {

MultiplierSpec build_candidate(double mu1, double mu2, double kappa, double delta) {
  MultiplierSpec m;
  m.a = -1.0;
  m.delta = delta;
  m.kappa = kappa;
  m.mu1 = mu1;
  m.mu2 = mu2;
  m.Q1 = std::exp(2.0 * delta * mu1);
  m.Q2 = std::exp(mu2);
  m.omega_minus_empty = mu2 >= 0.0;
  const double q1 = m.Q1, q2 = m.Q2, d = delta, kap = kappa;
  auto b1 = [d, q1, q2](double x) {
    return (x >= 0.0) ? std::exp(2.0 * d * x / q1) : std::exp(3.0 * d * x / q2);
  };
  m.b = [b1, d, kap](double x, double y) {
    return b1(x) + (2.0 * d - 1.0) * (1.0 - kap) * y * y;
  };
  m.b_x = [b1, d, q1, q2](double x, double) {
    return (x >= 0.0) ? (2.0 * d / q1) * b1(x) : (3.0 * d / q2) * b1(x);
  };
  m.b_y = [d, kap](double, double y) { return 2.0 * (2.0 * d - 1.0) * (1.0 - kap) * y; };
  m.c = [d](double, double y) { return 2.0 * (2.0 * d - 1.0) * y; };
  m.c_y = [d](double, double) { return 2.0 * (2.0 * d - 1.0); };
  return m;
}

CertificateReport dense_certificates(const MultiplierSpec& m, double* eps_out) {
  // The y-dependent pieces of b and alpha are nonnegative and gamma does not
  // depend on y, so y = 0 is the worst section; sweep x densely there.
  CertificateReport rep;
  const IbpCoefficients co = ibp_coefficients(make_power(1), 2.0 - m.kappa, m);
  const int n = 4097;
  double min_margin = std::numeric_limits<double>::infinity();
  double min_b = std::numeric_limits<double>::infinity();
  double min_gamma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double x = m.mu2 + (m.mu1 - m.mu2) * i / (n - 1);
    min_margin = std::min(min_margin, co.alpha(x, 0.0) - m.delta * std::abs(x));
    min_b = std::min(min_b, m.b(x, 0.0));
    min_gamma = std::min(min_gamma, co.gamma(x, 0.0));
  }
  rep.min_alpha_margin = min_margin;
  rep.min_b = min_b;
  rep.min_gamma = min_gamma;
  if (!(min_margin >= -1e-12)) rep.failures.push_back("alpha below delta |x|");
  if (!(min_b > 0.0)) rep.failures.push_back("b not positive");
  if (!(min_gamma > 0.0)) rep.failures.push_back("gamma not positive");
  rep.ok = rep.failures.empty();
  if (eps_out) *eps_out = min_gamma;
  return rep;
}

MultiplierSpec make_multiplier_impl(double mu1, double mu2, double kappa, double delta_request) {
  if (!(kappa >= 1.0 && kappa <= 1.5)) {
    throw std::invalid_argument("make_multiplier: kappa must lie in [1, 3/2]");
  }
  if (!(mu1 > mu2)) throw std::invalid_argument("make_multiplier: empty region");
  double delta = (delta_request > 0.0) ? std::min(delta_request, 0.49) : 0.25;
  for (int iter = 0; iter <= 40; ++iter) {
    MultiplierSpec m = build_candidate(mu1, mu2, kappa, delta);
    bool ok = delta < 0.5;
    if (!m.omega_minus_empty) ok = ok && 3.0 * delta < m.Q2;
    double eps = 0.0;
    if (ok) {
      const CertificateReport cert = dense_certificates(m, &eps);
      ok = cert.ok && eps > 0.0;
    }
    if (ok) {
      m.eps = eps;
      m.shrink_count = iter;
      return m;
    }
    delta *= 0.5;
  }
  throw std::runtime_error(
      "make_multiplier: no admissible delta after 40 halvings "
      "(the hyperbolic extent is too shallow for the gradient certificate)");
}

}  // namespace

MultiplierSpec make_multiplier(const MixedDomain& dom, double kappa, double delta_request) {
  return make_multiplier_impl(dom.d, dom.m, kappa, delta_request);
}

MultiplierSpec make_multiplier(const Rect& rect, double kappa, double delta_request) {
  return make_multiplier_impl(rect.x1, rect.x0, kappa, delta_request);
}

CertificateReport check_certificates(const MultiplierSpec& m) {
  return dense_certificates(m, nullptr);
}

CertificateReport check_certificates(const MultiplierSpec& m, const GeomPtr& geom) {
  CertificateReport rep;
  const IbpCoefficients co = ibp_coefficients(make_power(1), 2.0 - m.kappa, m);
  const GridSpec& s = geom->spec;
  double min_margin = std::numeric_limits<double>::infinity();
  double min_b = std::numeric_limits<double>::infinity();
  double min_gamma = std::numeric_limits<double>::infinity();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      if (!geom->active(i, j)) continue;
      const double x = s.x(i), y = s.y(j);
      min_margin = std::min(min_margin, co.alpha(x, y) - m.delta * std::abs(x));
      min_b = std::min(min_b, m.b(x, y));
      min_gamma = std::min(min_gamma, co.gamma(x, y));
    }
  }
  rep.min_alpha_margin = min_margin;
  rep.min_b = min_b;
  rep.min_gamma = min_gamma;
  if (!(min_margin >= -1e-12)) rep.failures.push_back("alpha below delta |x|");
  if (!(min_b > 0.0)) rep.failures.push_back("b not positive");
  if (!(min_gamma > 0.0)) rep.failures.push_back("gamma not positive");
  rep.ok = rep.failures.empty();
  return rep;
}

IbpCoefficients ibp_coefficients(const TypeChangeFn& K, double k, const MultiplierSpec& m) {
  IbpCoefficients co;
  const double a = m.a;
  co.omega = [K, k, a](double x, double) { return (1.0 - k) * (a / 2.0) * K.deriv2(x); };
  co.alpha = [K, k, a, m](double x, double y) {
    return (m.c_y(x, y) / 2.0 - (a + m.b_x(x, y) / 2.0)) * K.eval(x) +
           m.b(x, y) * (k - 0.5) * K.deriv1(x);
  };
  co.beta = [K, k, m](double x, double y) {
    return 0.5 * (m.c(x, y) * (k - 1.0) * K.deriv1(x) - m.b_y(x, y));
  };
  co.gamma = [a, m](double x, double y) { return 0.5 * (m.b_x(x, y) - m.c_y(x, y)) - a; };
  return co;
}

namespace {

IbpReport verify_ibp_impl(const OperatorSpec& op, const MultiplierSpec& m, GeomPtr geom,
                          const std::vector<std::vector<Point>>& loops,
                          const std::function<double(double, double)>& u_fn) {
  const GridField u = sample(geom, u_fn);
  const GridField ux = diff(u, Deriv::x);
  const GridField uy = diff(u, Deriv::y);
  const GridField mu = apply_multiplier(m, u);
  const GridField lu = apply(op, u);

  GridField prod = u;
  GridField quad = u;
  const IbpCoefficients co = ibp_coefficients(op.K, op.k_factor(), m);
  const GridSpec& s = u.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t kk = s.idx(i, j);
      prod.valid[kk] = mu.valid[kk] && lu.valid[kk];
      prod.values[kk] = prod.valid[kk] ? mu.values[kk] * lu.values[kk] : 0.0;
      quad.valid[kk] = u.valid[kk] && ux.valid[kk] && uy.valid[kk];
      if (quad.valid[kk]) {
        const double x = s.x(i), y = s.y(j);
        const double uv = u.values[kk], px = ux.values[kk], py = uy.values[kk];
        quad.values[kk] = co.omega(x, y) * uv * uv + co.alpha(x, y) * px * px +
                          2.0 * co.beta(x, y) * px * py + co.gamma(x, y) * py * py;
      } else {
        quad.values[kk] = 0.0;
      }
    }
  }

  IbpReport rep;
  rep.lhs = integrate_area(prod).value;
  rep.area = integrate_area(quad).value;

  const double a = m.a;
  const double kf = op.k_factor();
  const TypeChangeFn& K = op.K;
  auto F = [&](Point p) {
    const double uv = interp(u, p), px = interp(ux, p), py = interp(uy, p);
    const double Kx = K.eval(p.x), K1 = K.deriv1(p.x);
    return a * uv * Kx * px + (a * (kf - 1.0) / 2.0) * K1 * uv * uv +
           (m.b(p.x, p.y) / 2.0) * (Kx * px * px - py * py) + m.c(p.x, p.y) * Kx * px * py;
  };
  auto G = [&](Point p) {
    const double uv = interp(u, p), px = interp(ux, p), py = interp(uy, p);
    const double Kx = K.eval(p.x);
    return a * uv * py + m.b(p.x, p.y) * px * py +
           (m.c(p.x, p.y) / 2.0) * (py * py - Kx * px * px);
  };
  auto P = [&](Point p) { return -G(p); };
  std::vector<double> parts;
  for (const auto& loop : loops) {
    parts.push_back(integrate_polyline(loop, P, F));
  }
  rep.boundary = pairwise_sum(parts);
  rep.gap = std::abs(rep.lhs - rep.boundary - rep.area);
  rep.scale = std::max({std::abs(rep.lhs), std::abs(rep.boundary), std::abs(rep.area), 1.0});
  rep.nx = s.nx;
  rep.ny = s.ny;
  rep.h = std::max(s.hx, s.hy);
  return rep;
}

}  // namespace

IbpReport verify_ibp(const OperatorSpec& op, const MultiplierSpec& m, const MixedDomain& dom,
                     int n, const std::function<double(double, double)>& u_fn) {
  GeomPtr geom = make_grid(dom, n);
  const double ds = 0.5 * std::min(geom->spec.hx, geom->spec.hy);
  std::vector<std::vector<Point>> loops;
  for (const Arc& arc : dom.arcs) {
    loops.push_back(resample_polyline(arc.vertices, ds));
  }
  return verify_ibp_impl(op, m, std::move(geom), loops, u_fn);
}

IbpReport verify_ibp(const OperatorSpec& op, const MultiplierSpec& m, const Rect& rect, int nx,
                     int ny, const std::function<double(double, double)>& u_fn) {
  GeomPtr geom = make_grid(rect, nx, ny);
  const double ds = 0.5 * std::min(geom->spec.hx, geom->spec.hy);
  const std::vector<Point> corners = {{rect.x0, rect.y0},
                                      {rect.x1, rect.y0},
                                      {rect.x1, rect.y1},
                                      {rect.x0, rect.y1},
                                      {rect.x0, rect.y0}};
  std::vector<std::vector<Point>> loops = {resample_polyline(corners, ds)};
  return verify_ibp_impl(op, m, std::move(geom), loops, u_fn);
}

EnergyReport energy_inequality_check(double kappa, const MultiplierSpec& m, const GridField& u) {
  const GridSpec& s = u.spec();
  const double usup = sup_norm(u);
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      if (!u.is_valid(i, j) || std::abs(u.at(i, j)) <= 1e-12 * (1.0 + usup)) continue;
      for (int dj = -3; dj <= 3; ++dj) {
        for (int di = -3; di <= 3; ++di) {
          if (!u.geom->active(i + di, j + dj)) {
            throw std::invalid_argument(
                "energy_inequality_check: u must vanish within three cells of the boundary");
          }
        }
      }
    }
  }

  const TypeChangeFn K = make_power(1);
  const GridField ux = diff(u, Deriv::x);
  const GridField uy = diff(u, Deriv::y);
  const GridField mu_f = apply_multiplier(m, u);
  const GridField lstar = apply(adjoint_kappa(kappa), u);

  auto product = [&s](const GridField& f, const GridField& g) {
    GridField out = f;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
      out.valid[k] = f.valid[k] && g.valid[k];
      out.values[k] = out.valid[k] ? f.values[k] * g.values[k] : 0.0;
    }
    return out;
  };

  EnergyReport rep;
  rep.seminorm_sq = weighted_h10_sq(K, ux, uy);
  rep.l2_sq = l2_sq(u);
  rep.delta_prime = std::min(m.delta, m.eps);
  rep.link1 = rep.delta_prime * rep.seminorm_sq;
  rep.link2 = integrate_area(product(mu_f, lstar)).value;
  rep.link3 = std::sqrt(std::max(0.0, integrate_area(product(mu_f, mu_f)).value)) *
              std::sqrt(std::max(0.0, integrate_area(product(lstar, lstar)).value));
  rep.constant = 1.0 / rep.delta_prime;
  rep.tol = 1e-8 * std::max({std::abs(rep.link1), std::abs(rep.link2), std::abs(rep.link3)});
  rep.chain_ok = rep.link1 <= rep.link2 + rep.tol && rep.link2 <= rep.link3 + rep.tol;
  rep.nx = s.nx;
  rep.ny = s.ny;
  rep.hx = s.hx;
  rep.hy = s.hy;
  return rep;
}

std::string energy_report_json(const EnergyReport& rep) {
  nlohmann::json j;
  j["lhs"] = rep.link1;
  j["rhs"] = rep.link3;
  j["gap"] = rep.link3 - rep.link1;
  j["links"] = {{"coercivity", rep.link1},
                {"pairing", rep.link2},
                {"cauchy_schwarz", rep.link3}};
  j["constant"] = rep.constant;
  j["delta_prime"] = rep.delta_prime;
  j["seminorm_sq"] = rep.seminorm_sq;
  j["l2_sq"] = rep.l2_sq;
  j["chain_ok"] = rep.chain_ok;
  j["grid"] = {{"nx", rep.nx}, {"ny", rep.ny}, {"hx", rep.hx}, {"hy", rep.hy}};
  return j.dump(2);
}

double weighted_h10_sq(const TypeChangeFn& K, const GridField& ux, const GridField& uy,
                       Region region) {
  GridField w = ux;
  const GridSpec& s = ux.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      w.valid[k] = ux.valid[k] && uy.valid[k];
      w.values[k] = w.valid[k] ? std::abs(K.eval(s.x(i))) * ux.values[k] * ux.values[k] +
                                     uy.values[k] * uy.values[k]
                               : 0.0;
    }
  }
  return integrate_area(w, region).value;
}

double l2_sq(const GridField& u, Region region) {
  GridField w = u;
  for (std::size_t k = 0; k < w.values.size(); ++k) {
    w.values[k] = u.valid[k] ? u.values[k] * u.values[k] : 0.0;
  }
  return integrate_area(w, region).value;
}

PoincareResult poincare_constant(const TypeChangeFn& K, const Rect& rect, int nx, int ny,
                                 int trials, std::uint64_t seed) {
  PoincareResult out;
  GeomPtr geom = make_grid(rect, nx, ny);
  const double wx = rect.x1 - rect.x0;
  const double wy = rect.y1 - rect.y0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed + 1000003ULL * static_cast<std::uint64_t>(t));
    std::vector<TensorBump> bumps;
    for (int q = 0; q < 3; ++q) {
      TensorBump bp;
      bp.rx = rng.uniform(0.1, 0.3) * wx;
      bp.ry = rng.uniform(0.1, 0.3) * wy;
      bp.cx = rng.uniform(rect.x0 + bp.rx, rect.x1 - bp.rx);
      bp.cy = rng.uniform(rect.y0 + bp.ry, rect.y1 - bp.ry);
      bp.amp = rng.uniform(0.3, 1.0) * ((rng.next_u64() & 1) ? 1.0 : -1.0);
      bumps.push_back(bp);
    }
    auto val = [&bumps](double x, double y) {
      double v = 0.0;
      for (const auto& bp : bumps) v += bp.value(x, y);
      return v;
    };
    auto vdx = [&bumps](double x, double y) {
      double v = 0.0;
      for (const auto& bp : bumps) v += bp.dx(x, y);
      return v;
    };
    auto vdy = [&bumps](double x, double y) {
      double v = 0.0;
      for (const auto& bp : bumps) v += bp.dy(x, y);
      return v;
    };
    const GridField u = sample(geom, val);
    const GridField ux = sample(geom, vdx);
    const GridField uy = sample(geom, vdy);
    const double num = l2_sq(u);
    const double den = weighted_h10_sq(K, ux, uy);
    const double ratio = (den > 0.0) ? num / den : 0.0;
    out.trial_ratios.push_back(ratio);
    out.best_ratio = std::max(out.best_ratio, ratio);
  }
  return out;
}

}  // namespace keldysh
