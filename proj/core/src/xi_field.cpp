#include "keldysh/xi_field.hpp"

#include <cmath>

namespace keldysh {

XiGradient build_xi_gradient(const TypeChangeFn& K, const GridField& u) {
  const GridField ux = diff(u, Deriv::x);
  const GridField uy = diff(u, Deriv::y);
  XiGradient g{ux, ux};
  const GridSpec& s = u.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      const bool ok = ux.valid[k] && uy.valid[k];
      g.gx.valid[k] = g.gy.valid[k] = ok ? 1 : 0;
      if (!ok) {
        g.gx.values[k] = g.gy.values[k] = 0.0;
        continue;
      }
      g.gx.values[k] = -2.0 * ux.values[k] * uy.values[k];
      g.gy.values[k] = K.eval(s.x(i)) * ux.values[k] * ux.values[k] -
                       uy.values[k] * uy.values[k];
    }
  }
  return g;
}

PathIntegral integrate_xi(const XiGradient& grad, std::span<const Point> path) {
  PathIntegral out;
  std::vector<double> parts;
  if (path.size() >= 2) parts.reserve(path.size() - 1);
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const Point v = path[k];
    const Point w = path[k + 1];
    const double gxv = interp(grad.gx, v), gxw = interp(grad.gx, w);
    const double gyv = interp(grad.gy, v), gyw = interp(grad.gy, w);
    if (std::isnan(gxv) || std::isnan(gxw) || std::isnan(gyv) || std::isnan(gyw)) {
      ++out.skipped_segments;
      continue;
    }
    parts.push_back(0.5 * (gxv + gxw) * (w.x - v.x) + 0.5 * (gyv + gyw) * (w.y - v.y));
  }
  out.value = pairwise_sum(parts);
  return out;
}

DecayCheckResult characteristic_decay_check(const XiGradient& grad, const TypeChangeFn& K,
                                            const CharacteristicPath& path) {
  DecayCheckResult out;
  const double s = (path.branch == Branch::plus) ? 1.0 : -1.0;
  auto closed_form = [&](const Point& p, double gx, double gy) {
    const double r = std::max(0.0, -K.eval(p.x));
    return gy + s * std::sqrt(r) * gx;
  };
  for (std::size_t k = 0; k + 1 < path.vertices.size(); ++k) {
    const Point v = path.vertices[k];
    const Point w = path.vertices[k + 1];
    const double dy = w.y - v.y;
    if (dy == 0.0) continue;
    const double gxv = interp(grad.gx, v), gxw = interp(grad.gx, w);
    const double gyv = interp(grad.gy, v), gyw = interp(grad.gy, w);
    if (std::isnan(gxv) || std::isnan(gxw) || std::isnan(gyv) || std::isnan(gyw)) {
      ++out.skipped_segments;
      continue;
    }
    const double measured =
        (0.5 * (gxv + gxw) * (w.x - v.x) + 0.5 * (gyv + gyw) * dy) / dy;
    const double expected = 0.5 * (closed_form(v, gxv, gyv) + closed_form(w, gxw, gyw));
    out.max_abs_discrepancy = std::max(out.max_abs_discrepancy, std::abs(measured - expected));
    out.max_positive_rate = std::max(out.max_positive_rate, measured);
    ++out.segments;
  }
  out.max_positive_rate = std::max(out.max_positive_rate, 0.0);
  return out;
}

SonicLineReport sonic_line_report(const TypeChangeFn& K, const GridField& u) {
  const int i0 = u.geom->sonic_col;
  if (i0 < 0) throw std::invalid_argument("sonic_line_report: grid has no sonic column");
  const GridField ux = diff(u, Deriv::x);
  const GridField uy = diff(u, Deriv::y);
  SonicLineReport rep;
  const GridSpec& s = u.spec();
  const double k0 = K.eval(0.0);
  for (int j = 0; j < s.ny; ++j) {
    const std::size_t k = s.idx(i0, j);
    if (!(ux.valid[k] && uy.valid[k])) continue;
    const double uyv = uy.values[k];
    const double xiy = k0 * ux.values[k] * ux.values[k] - uyv * uyv;
    rep.y.push_back(s.y(j));
    rep.u_y.push_back(uyv);
    rep.xi_y.push_back(xiy);
    rep.max_abs_uy = std::max(rep.max_abs_uy, std::abs(uyv));
    rep.max_abs_xiy = std::max(rep.max_abs_xiy, std::abs(xiy));
  }
  return rep;
}

}  // namespace keldysh
