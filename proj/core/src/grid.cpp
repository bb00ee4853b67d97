#include "keldysh/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "keldysh/parallel.hpp"

namespace keldysh {

namespace {

constexpr double kSnap = 1e-12;

NodeClass interior_class(double x, int i, int sonic_col) {
  if (i == sonic_col) return NodeClass::sonic;
  return (x > 0.0) ? NodeClass::interior_elliptic : NodeClass::interior_hyperbolic;
}

}  // namespace

GeomPtr make_grid(const MixedDomain& dom, int n) {
  if (n < 5) throw std::invalid_argument("make_grid: need n >= 5 across [0, d]");
  auto geom = std::make_shared<GridGeom>();
  GridSpec& s = geom->spec;

  // hx divides [0, d] exactly and the negative side is extended in whole cells
  // past the apex, so x = 0 and x = d are grid lines for any m.
  const double total = dom.d - dom.m;
  int n_plus = std::max(2, static_cast<int>(std::lround((n - 1) * dom.d / total)));
  s.hx = dom.d / n_plus;
  const int n_minus = static_cast<int>(std::ceil(-dom.m / s.hx - 1e-9));
  s.nx = n_minus + n_plus + 1;
  s.x0 = -n_minus * s.hx;
  const int n_half = std::max(1, static_cast<int>(std::lround(dom.b / s.hx)));
  s.hy = dom.b / n_half;
  s.ny = 2 * n_half + 1;
  s.y0 = -dom.b;
  geom->sonic_col = n_minus;
  geom->right_x = dom.d;

  geom->mask.assign(s.size(), NodeClass::exterior);
  geom->row_left_x.resize(s.ny);
  const int i_right = s.nx - 1;
  for (int j = 0; j < s.ny; ++j) {
    const double y = s.y(j);
    const double xl = std::clamp(dom.left_boundary_x(std::clamp(y, -dom.b, dom.b)),
                                 s.x0, dom.d);
    geom->row_left_x[j] = xl;
    for (int i = 0; i < s.nx; ++i) {
      const double x = s.x(i);
      if (x < xl - 1e-8 || x > dom.d + 1e-8) continue;
      NodeClass c;
      if (j == 0 || j == s.ny - 1 || i == i_right) {
        c = NodeClass::boundary;
      } else {
        c = interior_class(x, i, geom->sonic_col);
      }
      geom->mask[s.idx(i, j)] = c;
    }
  }
  return geom;
}

GeomPtr make_grid(const Rect& rect, int nx, int ny) {
  if (nx < 3 || ny < 3) throw std::invalid_argument("make_grid: need nx, ny >= 3");
  if (!(rect.x1 > rect.x0 && rect.y1 > rect.y0)) {
    throw std::invalid_argument("make_grid: empty rectangle");
  }
  auto geom = std::make_shared<GridGeom>();
  GridSpec& s = geom->spec;
  s.nx = nx;
  s.ny = ny;
  s.hx = (rect.x1 - rect.x0) / (nx - 1);
  s.hy = (rect.y1 - rect.y0) / (ny - 1);
  s.x0 = rect.x0;
  s.y0 = rect.y0;
  geom->right_x = rect.x1;

  geom->sonic_col = -1;
  if (rect.x0 < kSnap && rect.x1 > -kSnap) {
    const int i0 = static_cast<int>(std::lround(-rect.x0 / s.hx));
    if (i0 >= 0 && i0 < nx) {
      if (std::abs(rect.x0 + i0 * s.hx) > 1e-13 * std::max(1.0, std::abs(rect.x1 - rect.x0))) {
        throw std::invalid_argument(
            "make_grid: rectangle straddles x = 0 but no grid line lands on it");
      }
      s.x0 = -i0 * s.hx;  // re-anchor so x(i0) evaluates to exactly zero
      geom->sonic_col = i0;
    }
  }

  geom->mask.assign(s.size(), NodeClass::exterior);
  geom->row_left_x.assign(s.ny, s.x0);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      NodeClass c;
      if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) {
        c = NodeClass::boundary;
      } else {
        c = interior_class(s.x(i), i, geom->sonic_col);
      }
      geom->mask[s.idx(i, j)] = c;
    }
  }
  return geom;
}

GridField make_field(GeomPtr geom) {
  GridField f;
  f.geom = std::move(geom);
  f.values.assign(f.geom->spec.size(), 0.0);
  f.valid.resize(f.geom->spec.size());
  for (std::size_t k = 0; k < f.valid.size(); ++k) {
    f.valid[k] = (f.geom->mask[k] != NodeClass::exterior) ? 1 : 0;
  }
  return f;
}

GridField sample(GeomPtr geom, const std::function<double(double, double)>& f) {
  GridField out = make_field(std::move(geom));
  const GridSpec& s = out.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      if (out.is_valid(i, j)) out.at(i, j) = f(s.x(i), s.y(j));
    }
  }
  return out;
}

namespace {

struct Stencil1D {
  // Offsets and weights relative to the node, already divided by the mesh power.
  int count = 0;
  int off[4] = {};
  double w[4] = {};
};

bool pick_first(const GridField& f, int i, int j, bool along_x, double h, SonicSide side,
                Stencil1D* st) {
  auto ok = [&](int o) {
    const int ii = along_x ? i + o : i;
    const int jj = along_x ? j : j + o;
    return ii >= 0 && jj >= 0 && ii < f.spec().nx && jj < f.spec().ny &&
           f.valid[f.spec().idx(ii, jj)] != 0;
  };
  const bool at_sonic = along_x && f.geom->sonic_col == i;
  const bool force_left = at_sonic && side == SonicSide::left;
  const bool force_right = at_sonic && side == SonicSide::right;
  if (!force_left && !force_right && ok(-1) && ok(1)) {
    *st = {2, {-1, 1}, {-0.5 / h, 0.5 / h}};
    return true;
  }
  if (!force_left && ok(1) && ok(2)) {
    *st = {3, {0, 1, 2}, {-1.5 / h, 2.0 / h, -0.5 / h}};
    return true;
  }
  if (!force_right && ok(-1) && ok(-2)) {
    *st = {3, {0, -1, -2}, {1.5 / h, -2.0 / h, 0.5 / h}};
    return true;
  }
  return false;
}

bool pick_second(const GridField& f, int i, int j, bool along_x, double h, SonicSide side,
                 Stencil1D* st) {
  auto ok = [&](int o) {
    const int ii = along_x ? i + o : i;
    const int jj = along_x ? j : j + o;
    return ii >= 0 && jj >= 0 && ii < f.spec().nx && jj < f.spec().ny &&
           f.valid[f.spec().idx(ii, jj)] != 0;
  };
  const double h2 = h * h;
  const bool at_sonic = along_x && f.geom->sonic_col == i;
  const bool force_left = at_sonic && side == SonicSide::left;
  const bool force_right = at_sonic && side == SonicSide::right;
  if (!force_left && !force_right && ok(-1) && ok(1)) {
    *st = {3, {-1, 0, 1}, {1.0 / h2, -2.0 / h2, 1.0 / h2}};
    return true;
  }
  if (!force_left && ok(1) && ok(2) && ok(3)) {
    *st = {4, {0, 1, 2, 3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}};
    return true;
  }
  if (!force_right && ok(-1) && ok(-2) && ok(-3)) {
    *st = {4, {0, -1, -2, -3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}};
    return true;
  }
  return false;
}

GridField diff_1d(const GridField& f, bool along_x, bool second, SonicSide side) {
  GridField out = f;
  const GridSpec& s = f.spec();
  const double h = along_x ? s.hx : s.hy;
  parallel_for(0, s.ny, [&](int j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t k = s.idx(i, j);
      if (!f.valid[k]) {
        out.valid[k] = 0;
        out.values[k] = 0.0;
        continue;
      }
      Stencil1D st;
      const bool got = second ? pick_second(f, i, j, along_x, h, side, &st)
                              : pick_first(f, i, j, along_x, h, side, &st);
      if (!got) {
        out.valid[k] = 0;
        out.values[k] = 0.0;
        continue;
      }
      double v = 0.0;
      for (int q = 0; q < st.count; ++q) {
        const int ii = along_x ? i + st.off[q] : i;
        const int jj = along_x ? j : j + st.off[q];
        v += st.w[q] * f.values[s.idx(ii, jj)];
      }
      out.values[k] = v;
    }
  });
  return out;
}

}  // namespace

GridField diff(const GridField& f, Deriv d, SonicSide side) {
  switch (d) {
    case Deriv::x:
      return diff_1d(f, true, false, side);
    case Deriv::y:
      return diff_1d(f, false, false, side);
    case Deriv::xx:
      return diff_1d(f, true, true, side);
    case Deriv::yy:
      return diff_1d(f, false, true, side);
    case Deriv::xy:
      return diff_1d(diff_1d(f, true, false, side), false, false, side);
  }
  throw std::invalid_argument("diff: unknown derivative");
}

namespace {

// Composite trapezoid along one row restricted to [xl, xr], visiting every
// stride-th node; partial cells against xl (and xr, defensively) use linear
// extrapolation from the nearest two visited nodes.
double row_integral(const GridField& f, int j, double xl, double xr, int stride) {
  const GridSpec& s = f.spec();
  const double cw = s.hx * stride;
  if (xr - xl <= 1e-14 * std::max(1.0, std::abs(xr) + std::abs(xl))) return 0.0;

  // The inclusion slack matches the mask's activity slack so boundary-noise in
  // xl (order 1e-9 from the traced arcs) cannot cull a node the mask kept.
  int i0 = -1, i1 = -1;
  for (int i = 0; i < s.nx; i += stride) {
    if (s.x(i) < xl - 1e-8 || s.x(i) > xr + 1e-8) continue;
    if (!f.is_valid(i, j)) continue;
    if (i0 < 0) i0 = i;
    i1 = i;
  }
  if (i0 < 0) return 0.0;
  if (i1 == i0) {
    // Single-node row (the sliver between the curved boundary and x = 0 near
    // its tips): integrate the linear model through the node, slope from the
    // nearest valid neighbor in either direction.
    double slp = 0.0;
    if (i0 + stride < s.nx && f.is_valid(i0 + stride, j)) {
      slp = (f.at(i0 + stride, j) - f.at(i0, j)) / cw;
    } else if (i0 - stride >= 0 && f.is_valid(i0 - stride, j)) {
      slp = (f.at(i0, j) - f.at(i0 - stride, j)) / cw;
    }
    const double fl = f.at(i0, j) + slp * (xl - s.x(i0));
    const double fr = f.at(i0, j) + slp * (xr - s.x(i0));
    return 0.5 * (fl + fr) * (xr - xl);
  }

  std::vector<double> parts;
  parts.reserve(static_cast<std::size_t>((i1 - i0) / stride) + 2);
  for (int i = i0; i + stride <= i1; i += stride) {
    if (!f.is_valid(i + stride, j)) return 0.0;  // interior gap: row unusable
    parts.push_back(0.5 * (f.at(i, j) + f.at(i + stride, j)) * cw);
  }
  if (s.x(i0) > xl + kSnap) {
    const double t = (xl - s.x(i0)) / cw;
    const double f_edge = f.at(i0, j) + t * (f.at(i0 + stride, j) - f.at(i0, j));
    parts.push_back(0.5 * (f_edge + f.at(i0, j)) * (s.x(i0) - xl));
  }
  if (s.x(i1) < xr - kSnap) {
    const double t = (xr - s.x(i1)) / cw;
    const double f_edge = f.at(i1, j) + t * (f.at(i1, j) - f.at(i1 - stride, j));
    parts.push_back(0.5 * (f_edge + f.at(i1, j)) * (xr - s.x(i1)));
  }
  return pairwise_sum(parts);
}

double area_pass(const GridField& f, Region region, int stride) {
  const GridSpec& s = f.spec();
  std::vector<int> row_ids;
  for (int j = 0; j < s.ny; j += stride) row_ids.push_back(j);
  std::vector<double> rows(row_ids.size(), 0.0);
  parallel_for(0, static_cast<int>(row_ids.size()), [&](int r) {
    const int j = row_ids[static_cast<std::size_t>(r)];
    double xl = std::max(f.geom->row_left_x[j], s.x0);
    double xr = f.geom->right_x;
    if (region == Region::omega_plus) xl = std::max(xl, 0.0);
    if (region == Region::omega_minus) xr = std::min(xr, 0.0);
    double wy = 1.0;
    if (j == 0 || j + stride > s.ny - 1) wy = 0.5;
    rows[static_cast<std::size_t>(r)] =
        wy * (s.hy * stride) * row_integral(f, j, xl, xr, stride);
  });
  return pairwise_sum(rows);
}

}  // namespace

QuadratureResult integrate_area(const GridField& f, Region region) {
  QuadratureResult res;
  res.value = area_pass(f, region, 1);
  const GridSpec& s = f.spec();
  if ((s.nx - 1) % 2 == 0 && (s.ny - 1) % 2 == 0 && s.nx >= 9 && s.ny >= 9) {
    const double coarse = area_pass(f, region, 2);
    res.estimated_error = std::abs(res.value - coarse) / 3.0;
  }
  return res;
}

double integrate_polyline(std::span<const Point> loop, const std::function<double(Point)>& P,
                          const std::function<double(Point)>& Q) {
  if (loop.size() < 2) return 0.0;
  std::vector<double> parts;
  parts.reserve(loop.size() - 1);
  for (std::size_t k = 0; k + 1 < loop.size(); ++k) {
    const Point& v = loop[k];
    const Point& w = loop[k + 1];
    const double dx = w.x - v.x;
    const double dy = w.y - v.y;
    double c = 0.0;
    if (dx != 0.0) c += 0.5 * (P(v) + P(w)) * dx;
    if (dy != 0.0) c += 0.5 * (Q(v) + Q(w)) * dy;
    parts.push_back(c);
  }
  return pairwise_sum(parts);
}

std::vector<Point> resample_polyline(std::span<const Point> verts, double ds) {
  std::vector<Point> out;
  if (verts.size() < 2 || !(ds > 0.0)) {
    out.assign(verts.begin(), verts.end());
    return out;
  }
  double length = 0.0;
  for (std::size_t k = 0; k + 1 < verts.size(); ++k) {
    length += std::hypot(verts[k + 1].x - verts[k].x, verts[k + 1].y - verts[k].y);
  }
  const int n = std::max(1, static_cast<int>(std::lround(length / ds)));
  const double target = length / n;
  out.push_back(verts.front());
  double carried = 0.0;
  std::size_t seg = 0;
  double seg_pos = 0.0;  // arc length consumed within the current segment
  for (int step = 1; step < n; ++step) {
    double need = target - carried;
    carried = 0.0;
    while (seg + 1 < verts.size()) {
      const double seg_len =
          std::hypot(verts[seg + 1].x - verts[seg].x, verts[seg + 1].y - verts[seg].y);
      const double avail = seg_len - seg_pos;
      if (need <= avail || seg + 2 == verts.size()) {
        seg_pos += need;
        const double t = (seg_len > 0.0) ? std::min(seg_pos / seg_len, 1.0) : 0.0;
        out.push_back({verts[seg].x + t * (verts[seg + 1].x - verts[seg].x),
                       verts[seg].y + t * (verts[seg + 1].y - verts[seg].y)});
        break;
      }
      need -= avail;
      ++seg;
      seg_pos = 0.0;
    }
  }
  out.push_back(verts.back());
  return out;
}

double integrate_boundary(const MixedDomain& dom, const std::function<double(Point)>& P,
                          const std::function<double(Point)>& Q, double ds, CutMode mode) {
  std::vector<double> parts;
  for (const Arc& arc : dom.arcs) {
    const std::vector<Point> pts = resample_polyline(arc.vertices, ds);
    parts.push_back(integrate_polyline(pts, P, Q));
  }
  if (mode == CutMode::split) {
    // Traverse the sonic chord upward and downward; the contributions cancel
    // and the pair keeps the two half-domain loops individually closed.
    const int n = std::max(2, static_cast<int>(std::lround(2.0 * dom.b / ds)));
    std::vector<Point> up, down;
    for (int k = 0; k <= n; ++k) {
      const double y = -dom.b + 2.0 * dom.b * k / n;
      up.push_back({0.0, y});
    }
    down.assign(up.rbegin(), up.rend());
    parts.push_back(integrate_polyline(up, P, Q));
    parts.push_back(integrate_polyline(down, P, Q));
  }
  return pairwise_sum(parts);
}

double interp(const GridField& f, Point p) {
  const GridSpec& s = f.spec();
  if (s.nx < 2 || s.ny < 2) return std::numeric_limits<double>::quiet_NaN();
  // Points beyond the grid's bounding box (with a half-cell slack for
  // roundoff on the edges) are out of reach, never extrapolation targets.
  if (p.x < s.x0 - 0.5 * s.hx || p.x > s.x(s.nx - 1) + 0.5 * s.hx ||
      p.y < s.y0 - 0.5 * s.hy || p.y > s.y(s.ny - 1) + 0.5 * s.hy) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  int ci = static_cast<int>(std::floor((p.x - s.x0) / s.hx));
  int cj = static_cast<int>(std::floor((p.y - s.y0) / s.hy));
  ci = std::clamp(ci, 0, s.nx - 2);
  cj = std::clamp(cj, 0, s.ny - 2);

  // Ordered roughly by shift distance; the first complete cell wins. The long
  // +x tail reaches past the invalid ring near the apex of the curved arcs.
  static constexpr int kShift[][2] = {
      {0, 0},  {1, 0},  {0, 1},  {0, -1}, {-1, 0}, {1, 1},  {1, -1}, {2, 0},  {-1, 1},
      {-1, -1}, {2, 1},  {2, -1}, {0, 2},  {0, -2}, {-2, 0}, {1, 2},  {1, -2}, {3, 0},
      {2, 2},  {2, -2}, {3, 1},  {3, -1}, {4, 0},  {3, 2},  {3, -2}, {4, 1},  {4, -1},
      {5, 0},  {4, 2},  {4, -2}, {5, 1},  {5, -1}, {6, 0}};
  for (const auto& sh : kShift) {
    const int bi = ci + sh[0];
    const int bj = cj + sh[1];
    if (bi < 0 || bj < 0 || bi + 1 >= s.nx || bj + 1 >= s.ny) continue;
    if (!f.is_valid(bi, bj) || !f.is_valid(bi + 1, bj) || !f.is_valid(bi, bj + 1) ||
        !f.is_valid(bi + 1, bj + 1)) {
      continue;
    }
    const double u = (p.x - s.x(bi)) / s.hx;
    const double v = (p.y - s.y(bj)) / s.hy;
    return (1.0 - u) * (1.0 - v) * f.at(bi, bj) + u * (1.0 - v) * f.at(bi + 1, bj) +
           (1.0 - u) * v * f.at(bi, bj + 1) + u * v * f.at(bi + 1, bj + 1);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double sup_norm(const GridField& f) {
  double m = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    if (f.valid[k]) m = std::max(m, std::abs(f.values[k]));
  }
  return m;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

void write_csv(const GridField& f, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("write_csv: cannot open " + path);
  std::fputs("x,y,value\n", fp);
  const GridSpec& s = f.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      std::fprintf(fp, "%.12e,%.12e,%.12e\n", s.x(i), s.y(j), f.at(i, j));
    }
  }
  std::fclose(fp);
}

namespace {

struct BinaryHeader {
  char magic[4];
  std::uint32_t nx, ny;
  float hx, hy, x0, y0;
  std::uint32_t reserved;
};
static_assert(sizeof(BinaryHeader) == 32, "fixed 32-byte header");

}  // namespace

void write_binary(const GridField& f, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("write_binary: cannot open " + path);
  const GridSpec& s = f.spec();
  BinaryHeader h{};
  std::memcpy(h.magic, "KLGF", 4);
  h.nx = static_cast<std::uint32_t>(s.nx);
  h.ny = static_cast<std::uint32_t>(s.ny);
  h.hx = static_cast<float>(s.hx);
  h.hy = static_cast<float>(s.hy);
  h.x0 = static_cast<float>(s.x0);
  h.y0 = static_cast<float>(s.y0);
  h.reserved = 0;
  bool ok = std::fwrite(&h, sizeof h, 1, fp) == 1;
  ok = ok && std::fwrite(f.values.data(), sizeof(double), f.values.size(), fp) == f.values.size();
  std::fclose(fp);
  if (!ok) throw std::runtime_error("write_binary: short write on " + path);
}

GridField read_binary(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("read_binary: cannot open " + path);
  BinaryHeader h{};
  if (std::fread(&h, sizeof h, 1, fp) != 1 || std::memcmp(h.magic, "KLGF", 4) != 0) {
    std::fclose(fp);
    throw std::runtime_error("read_binary: bad header in " + path);
  }
  Rect r;
  r.x0 = h.x0;
  r.y0 = h.y0;
  r.x1 = h.x0 + (h.nx - 1) * static_cast<double>(h.hx);
  r.y1 = h.y0 + (h.ny - 1) * static_cast<double>(h.hy);
  auto geom = std::make_shared<GridGeom>();
  GridSpec& s = geom->spec;
  s.nx = static_cast<int>(h.nx);
  s.ny = static_cast<int>(h.ny);
  s.hx = h.hx;
  s.hy = h.hy;
  s.x0 = h.x0;
  s.y0 = h.y0;
  geom->right_x = r.x1;
  geom->sonic_col = -1;
  for (int i = 0; i < s.nx; ++i) {
    if (std::abs(s.x(i)) <= 1e-12) {
      geom->sonic_col = i;
      break;
    }
  }
  geom->mask.assign(s.size(), NodeClass::exterior);
  geom->row_left_x.assign(s.ny, s.x0);
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      geom->mask[s.idx(i, j)] = (i == 0 || j == 0 || i == s.nx - 1 || j == s.ny - 1)
                                    ? NodeClass::boundary
                                    : interior_class(s.x(i), i, geom->sonic_col);
    }
  }
  GridField f = make_field(geom);
  const bool ok = std::fread(f.values.data(), sizeof(double), f.values.size(), fp) ==
                  f.values.size();
  std::fclose(fp);
  if (!ok) throw std::runtime_error("read_binary: short read in " + path);
  return f;
}

}  // namespace keldysh
