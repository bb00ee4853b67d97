#include "keldysh/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "keldysh/parallel.hpp"
#include "keldysh/rng.hpp"

namespace keldysh {

namespace {

struct Csr {
  int rows = 0, cols = 0;
  std::vector<long> ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  void add_row(std::span<const std::pair<int, double>> entries) {
    for (const auto& [c, v] : entries) {
      col.push_back(c);
      val.push_back(v);
    }
    ptr.push_back(static_cast<long>(col.size()));
    ++rows;
  }
};

Csr transpose(const Csr& a) {
  Csr t;
  t.rows = a.cols;
  t.cols = a.rows;
  std::vector<long> count(a.cols + 1, 0);
  for (int c : a.col) ++count[c + 1];
  for (int i = 0; i < a.cols; ++i) count[i + 1] += count[i];
  t.ptr = count;
  t.col.resize(a.col.size());
  t.val.resize(a.val.size());
  std::vector<long> cursor(count.begin(), count.end() - 1);
  for (int r = 0; r < a.rows; ++r) {
    for (long k = a.ptr[r]; k < a.ptr[r + 1]; ++k) {
      const long dst = cursor[a.col[k]]++;
      t.col[dst] = r;
      t.val[dst] = a.val[k];
    }
  }
  return t;
}

void spmv(const Csr& a, std::span<const double> x, std::span<double> out) {
  parallel_for(0, a.rows, [&](int r) {
    double s = 0.0;
    for (long k = a.ptr[r]; k < a.ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    out[r] = s;
  });
}

// Chunked pairwise dot product; the reduction tree depends only on the length.
double dot(std::span<const double> a, std::span<const double> b) {
  constexpr std::size_t kChunk = 1024;
  std::vector<double> sums;
  sums.reserve(a.size() / kChunk + 1);
  for (std::size_t lo = 0; lo < a.size(); lo += kChunk) {
    const std::size_t hi = std::min(a.size(), lo + kChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    sums.push_back(s);
  }
  return pairwise_sum(sums);
}

struct CgResult {
  std::vector<double> x;
  long iterations = 0;
  bool converged = false;
};

// CGLS on min ||Ax - b||, optionally preconditioned by inverse column norms
// of A (Jacobi on the normal equations).
CgResult cgls(const Csr& a, const Csr& at, std::span<const double> b,
              std::vector<double> x0, double tol, long maxit, bool jacobi) {
  const int nc = a.cols;
  CgResult res;
  res.x = std::move(x0);
  std::vector<double> prec(nc, 1.0);
  if (jacobi) {
    std::vector<double> colnorm(nc, 0.0);
    for (std::size_t k = 0; k < a.val.size(); ++k) colnorm[a.col[k]] += a.val[k] * a.val[k];
    for (int i = 0; i < nc; ++i) prec[i] = colnorm[i] > 0.0 ? 1.0 / colnorm[i] : 1.0;
  }

  std::vector<double> r(a.rows), s(nc), z(nc), p(nc), q(a.rows);
  spmv(a, res.x, r);
  for (int i = 0; i < a.rows; ++i) r[i] = b[i] - r[i];
  spmv(at, r, s);

  std::vector<double> atb(nc);
  spmv(at, std::vector<double>(b.begin(), b.end()), atb);
  const double denom = std::max({std::sqrt(dot(atb, atb)), std::sqrt(dot(s, s)), 1e-300});

  for (int i = 0; i < nc; ++i) z[i] = prec[i] * s[i];
  p = z;
  double gamma = dot(s, z);
  const double stop = tol * denom;

  for (long it = 0; it < maxit; ++it) {
    if (std::sqrt(dot(s, s)) <= stop) {
      res.converged = true;
      break;
    }
    spmv(a, p, q);
    const double qq = dot(q, q);
    if (qq <= 0.0) {
      res.converged = true;
      break;
    }
    const double alpha = gamma / qq;
    for (int i = 0; i < nc; ++i) res.x[i] += alpha * p[i];
    for (int i = 0; i < a.rows; ++i) r[i] -= alpha * q[i];
    spmv(at, r, s);
    for (int i = 0; i < nc; ++i) z[i] = prec[i] * s[i];
    const double gamma_new = dot(s, z);
    const double beta = gamma_new / gamma;
    gamma = gamma_new;
    for (int i = 0; i < nc; ++i) p[i] = z[i] + beta * p[i];
    res.iterations = it + 1;
  }
  if (!res.converged && std::sqrt(dot(s, s)) <= stop) res.converged = true;
  return res;
}

struct Entry {
  int col;
  double w;
};

// Second-order PDE stencil along one axis; entries are appended as
// (offset, uxx weight, ux weight) triples resolved by the caller.
struct AxisStencil {
  int count = 0;
  int off[4] = {};
  double w2[4] = {};  // second-derivative weights, 1/h^2 scale included
  double w1[4] = {};  // first-derivative weights, 1/h scale included
};

bool axis_stencil(const GridGeom& g, int i, int j, bool along_x, AxisStencil* st) {
  auto act = [&](int o) {
    return along_x ? g.active(i + o, j) : g.active(i, j + o);
  };
  const double h = along_x ? g.spec.hx : g.spec.hy;
  const double h2 = h * h;
  if (act(-1) && act(1)) {
    *st = {3, {-1, 0, 1}, {1.0 / h2, -2.0 / h2, 1.0 / h2}, {-0.5 / h, 0.0, 0.5 / h}};
    return true;
  }
  if (act(1) && act(2) && act(3)) {
    *st = {4,
           {0, 1, 2, 3},
           {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2},
           {-1.5 / h, 2.0 / h, -0.5 / h, 0.0}};
    return true;
  }
  if (act(-1) && act(-2) && act(-3)) {
    *st = {4,
           {0, -1, -2, -3},
           {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2},
           {1.5 / h, -2.0 / h, 0.5 / h, 0.0}};
    return true;
  }
  return false;
}

// First complete active 2x2 cell near p, searching the same shift ring the
// field interpolation uses; returns bilinear weights on its corners.
bool bilinear_cell(const GridGeom& g, Point p, std::array<Entry, 4>* out,
                   const std::vector<int>& node_col) {
  const GridSpec& s = g.spec;
  int ci = static_cast<int>(std::floor((p.x - s.x0) / s.hx));
  int cj = static_cast<int>(std::floor((p.y - s.y0) / s.hy));
  ci = std::clamp(ci, 0, s.nx - 2);
  cj = std::clamp(cj, 0, s.ny - 2);
  static constexpr int kShift[][2] = {
      {0, 0},  {1, 0},  {0, 1},  {0, -1}, {-1, 0}, {1, 1},  {1, -1}, {2, 0},  {-1, 1},
      {-1, -1}, {2, 1},  {2, -1}, {0, 2},  {0, -2}, {-2, 0}, {1, 2},  {1, -2}, {3, 0},
      {2, 2},  {2, -2}, {3, 1},  {3, -1}, {4, 0},  {3, 2},  {3, -2}, {4, 1},  {4, -1},
      {5, 0},  {4, 2},  {4, -2}, {5, 1},  {5, -1}, {6, 0}};
  for (const auto& sh : kShift) {
    const int bi = ci + sh[0];
    const int bj = cj + sh[1];
    if (bi < 0 || bj < 0 || bi + 1 >= s.nx || bj + 1 >= s.ny) continue;
    if (!g.active(bi, bj) || !g.active(bi + 1, bj) || !g.active(bi, bj + 1) ||
        !g.active(bi + 1, bj + 1)) {
      continue;
    }
    const double u = (p.x - s.x(bi)) / s.hx;
    const double v = (p.y - s.y(bj)) / s.hy;
    (*out)[0] = {node_col[s.idx(bi, bj)], (1.0 - u) * (1.0 - v)};
    (*out)[1] = {node_col[s.idx(bi + 1, bj)], u * (1.0 - v)};
    (*out)[2] = {node_col[s.idx(bi, bj + 1)], (1.0 - u) * v};
    (*out)[3] = {node_col[s.idx(bi + 1, bj + 1)], u * v};
    return true;
  }
  return false;
}

struct Frame {
  Csr a;
  std::vector<double> rhs;
  long pde_rows = 0;  // rows [0, pde_rows) are PDE rows, the rest boundary
  double w_b = 0.0;
  std::vector<int> node_col;  // -1 for exterior nodes
  int unknowns = 0;
};

Frame assemble(const OperatorSpec& op, GeomPtr geom, const MixedDomain* dom,
               const BoundaryData& bc, const std::function<double(Point)>& f,
               const SolveOptions& opt) {
  const GridGeom& g = *geom;
  const GridSpec& s = g.spec;
  Frame fr;
  fr.node_col.assign(s.size(), -1);
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      if (g.active(i, j)) fr.node_col[s.idx(i, j)] = fr.unknowns++;
    }
  }
  fr.a.cols = fr.unknowns;
  fr.w_b = opt.boundary_weight > 0.0 ? opt.boundary_weight : 1.0 / std::min(s.hx, s.hy);

  const double w_pde = std::sqrt(s.hx * s.hy);
  const bool skip_sonic = !op.K.c1_at_sonic && op.form != OperatorForm::kappa;
  std::vector<std::pair<int, double>> row;

  // A straight-edge node whose arc carries Dirichlet data is pinned by its
  // data row and gets no PDE row.
  auto dirichlet_pinned = [&](int i, int j) {
    auto has_dirichlet = [&](const char* arc) {
      const auto it = bc.conditions.find(arc);
      return it != bc.conditions.end() && it->second.kind == BcKind::dirichlet;
    };
    if (j == 0 && has_dirichlet(dom ? "L1" : "bottom")) return true;
    if (j == s.ny - 1 && has_dirichlet(dom ? "L3" : "top")) return true;
    if (i == s.nx - 1 && has_dirichlet(dom ? "L2" : "right")) return true;
    if (!dom && i == 0 && has_dirichlet("left")) return true;
    return false;
  };

  // PDE rows at every active node where a stencil can be formed, except nodes
  // pinned by Dirichlet data. The equation holds up to boundary portions that
  // carry no data, so nodes on the characteristic arcs get one-sided rows:
  // leaving them unconstrained opens a discrete near-kernel anchored at the
  // arcs and the minimizer drifts from the continuum solution.
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      if (!g.active(i, j)) continue;
      if (dirichlet_pinned(i, j)) continue;
      if (skip_sonic && i == g.sonic_col) continue;
      AxisStencil sx, sy;
      if (!axis_stencil(g, i, j, true, &sx) || !axis_stencil(g, i, j, false, &sy)) continue;
      const double x = s.x(i);
      const double kx = op.K.eval(x);
      const double c1 = op.first_order(x);
      row.clear();
      for (int q = 0; q < sx.count; ++q) {
        const double w = kx * sx.w2[q] + c1 * sx.w1[q];
        if (w != 0.0) row.emplace_back(fr.node_col[s.idx(i + sx.off[q], j)], w_pde * w);
      }
      for (int q = 0; q < sy.count; ++q) {
        const double w = sy.w2[q];
        if (w != 0.0) row.emplace_back(fr.node_col[s.idx(i, j + sy.off[q])], w_pde * w);
      }
      // Merge duplicate references to the center node.
      std::sort(row.begin(), row.end());
      std::vector<std::pair<int, double>> merged;
      for (const auto& e : row) {
        if (!merged.empty() && merged.back().first == e.first) {
          merged.back().second += e.second;
        } else {
          merged.push_back(e);
        }
      }
      fr.a.add_row(merged);
      fr.rhs.push_back(w_pde * f({x, s.y(j)}));
    }
  }
  fr.pde_rows = fr.a.rows;

  auto add_dirichlet_node = [&](int i, int j, double ds,
                                const std::function<double(Point)>& gv) {
    if (!g.active(i, j)) return;
    const double w = std::sqrt(fr.w_b * ds);
    const std::pair<int, double> one[] = {{fr.node_col[s.idx(i, j)], w}};
    fr.a.add_row(one);
    fr.rhs.push_back(w * gv({s.x(i), s.y(j)}));
  };
  auto add_neumann_row = [&](int i, int j, bool bottom, double ds,
                             const std::function<double(Point)>& gv) {
    if (!g.active(i, j)) return;
    const double sgn = bottom ? -1.0 : 1.0;
    const int dir = bottom ? 1 : -1;
    if (!g.active(i, j + dir) || !g.active(i, j + 2 * dir)) return;
    const double w = std::sqrt(fr.w_b * ds);
    const double inv = 1.0 / (2.0 * s.hy);
    const std::pair<int, double> three[] = {
        {fr.node_col[s.idx(i, j)], w * sgn * 3.0 * inv},
        {fr.node_col[s.idx(i, j + dir)], w * sgn * -4.0 * inv},
        {fr.node_col[s.idx(i, j + 2 * dir)], w * sgn * 1.0 * inv}};
    fr.a.add_row(three);
    fr.rhs.push_back(w * gv({s.x(i), s.y(j)}));
  };

  auto node_arc = [&](const std::string& name, const BoundaryCondition& cond) {
    // Horizontal arcs walk i at fixed j, vertical arcs walk j at fixed i.
    const bool is_bottom = name == "L1" || name == "bottom";
    const bool is_top = name == "L3" || name == "top";
    const bool is_right = name == "L2" || name == "right";
    const bool is_left = name == "left";
    if (is_bottom || is_top) {
      const int j = is_bottom ? 0 : s.ny - 1;
      for (int i = 0; i < s.nx; ++i) {
        const double ds = (i == 0 || i == s.nx - 1) ? 0.5 * s.hx : s.hx;
        if (cond.kind == BcKind::dirichlet) {
          add_dirichlet_node(i, j, ds, cond.value);
        } else {
          add_neumann_row(i, j, is_bottom, ds, cond.value);
        }
      }
    } else if (is_right || is_left) {
      if (cond.kind != BcKind::dirichlet) {
        throw std::invalid_argument("solve_lsq: y-derivative data needs a horizontal arc");
      }
      const int i = is_right ? s.nx - 1 : 0;
      for (int j = 0; j < s.ny; ++j) {
        const double ds = (j == 0 || j == s.ny - 1) ? 0.5 * s.hy : s.hy;
        add_dirichlet_node(i, j, ds, cond.value);
      }
    } else {
      throw std::invalid_argument("solve_lsq: unknown arc " + name);
    }
  };

  for (const auto& [name, cond] : bc.conditions) {
    if (name == "Gamma1" || name == "Gamma2") {
      if (!dom) throw std::invalid_argument("solve_lsq: characteristic arcs need a domain");
      if (cond.kind != BcKind::dirichlet) {
        throw std::invalid_argument("solve_lsq: characteristic arcs take Dirichlet data");
      }
      const std::vector<Point> samples =
          resample_polyline(dom->arc(name).vertices, std::min(s.hx, s.hy));
      if (samples.size() < 2) continue;
      for (std::size_t q = 0; q < samples.size(); ++q) {
        std::array<Entry, 4> cell;
        if (!bilinear_cell(g, samples[q], &cell, fr.node_col)) continue;
        double seg = 0.0;
        if (q > 0) {
          seg += 0.5 * std::hypot(samples[q].x - samples[q - 1].x,
                                  samples[q].y - samples[q - 1].y);
        }
        if (q + 1 < samples.size()) {
          seg += 0.5 * std::hypot(samples[q + 1].x - samples[q].x,
                                  samples[q + 1].y - samples[q].y);
        }
        if (seg <= 0.0) continue;
        const double w = std::sqrt(fr.w_b * seg);
        std::vector<std::pair<int, double>> entries;
        for (const Entry& e : cell) entries.emplace_back(e.col, w * e.w);
        std::sort(entries.begin(), entries.end());
        fr.a.add_row(entries);
        fr.rhs.push_back(w * cond.value(samples[q]));
      }
    } else {
      node_arc(name, cond);
    }
  }
  return fr;
}

LsqSolution run_frame(Frame fr, GeomPtr geom, const SolveOptions& opt) {
  std::vector<double> x0(fr.unknowns, 0.0);
  if (opt.random_start) {
    Rng rng(opt.seed);
    for (double& v : x0) v = rng.uniform(-1.0, 1.0);
  }
  const long maxit = opt.max_iter > 0 ? opt.max_iter : 20L * fr.unknowns;
  const Csr at = transpose(fr.a);
  CgResult cg = cgls(fr.a, at, fr.rhs, std::move(x0), opt.cg_tol, maxit, opt.jacobi);

  LsqSolution sol;
  sol.iterations = cg.iterations;
  sol.converged = cg.converged;

  std::vector<double> ax(fr.a.rows);
  spmv(fr.a, cg.x, ax);
  double block_pde = 0.0, block_bdy = 0.0;
  for (long r = 0; r < fr.a.rows; ++r) {
    const double e = ax[r] - fr.rhs[r];
    if (r < fr.pde_rows) {
      block_pde += e * e;
    } else {
      block_bdy += e * e;
    }
  }
  sol.interior_residual = std::sqrt(block_pde);
  sol.boundary_mismatch = std::sqrt(block_bdy / fr.w_b);
  sol.residual_norm = std::sqrt(block_pde + block_bdy);

  // Unknowns never referenced by any row stay at their start value; zero them
  // so the reported field is the minimum-norm representative.
  std::vector<char> touched(fr.unknowns, 0);
  for (int c : fr.a.col) touched[c] = 1;
  sol.pruned = 0;
  for (int c = 0; c < fr.unknowns; ++c) {
    if (!touched[c]) {
      cg.x[c] = 0.0;
      ++sol.pruned;
    }
  }

  sol.u = make_field(std::move(geom));
  const GridSpec& s = sol.u.spec();
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const int c = fr.node_col[s.idx(i, j)];
      if (c >= 0) sol.u.at(i, j) = cg.x[c];
    }
  }
  return sol;
}

}  // namespace

LsqSolution solve_lsq(const OperatorSpec& op, const MixedDomain& dom, int n,
                      const BoundaryData& bc, const std::function<double(Point)>& f,
                      const SolveOptions& opt) {
  GeomPtr geom = make_grid(dom, n);
  Frame fr = assemble(op, geom, &dom, bc, f, opt);
  return run_frame(std::move(fr), std::move(geom), opt);
}

LsqSolution solve_lsq(const OperatorSpec& op, const Rect& rect, int nx, int ny,
                      const BoundaryData& bc, const std::function<double(Point)>& f,
                      const SolveOptions& opt) {
  GeomPtr geom = make_grid(rect, nx, ny);
  Frame fr = assemble(op, geom, nullptr, bc, f, opt);
  return run_frame(std::move(fr), std::move(geom), opt);
}

std::vector<OverdeterminacyRow> overdeterminacy_experiment(
    const OperatorSpec& op, const MixedDomain& dom, std::span<const int> grids,
    const std::function<double(Point)>& f, const std::function<double(Point)>& g_straight,
    const std::function<double(Point)>& g_char, const SolveOptions& opt) {
  std::vector<OverdeterminacyRow> rows;
  for (int n : grids) {
    BoundaryData open;
    open.conditions["L1"] = {BcKind::dirichlet, g_straight};
    open.conditions["L2"] = {BcKind::dirichlet, g_straight};
    open.conditions["L3"] = {BcKind::dirichlet, g_straight};
    BoundaryData closed = open;
    closed.conditions["Gamma1"] = {BcKind::dirichlet, g_char};
    closed.conditions["Gamma2"] = {BcKind::dirichlet, g_char};

    const LsqSolution so = solve_lsq(op, dom, n, open, f, opt);
    const LsqSolution sc = solve_lsq(op, dom, n, closed, f, opt);
    OverdeterminacyRow row;
    row.n = n;
    row.h = so.u.spec().hx;
    row.open_residual = so.residual_norm;
    row.closed_residual = sc.residual_norm;
    for (int j = 0; j < so.u.spec().ny; ++j) {
      for (int i = 0; i < so.u.spec().nx; ++i) {
        if (so.u.is_valid(i, j)) row.open_sup = std::max(row.open_sup, std::abs(so.u.at(i, j)));
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<MixedDnRow> mixed_dn_experiment(const OperatorSpec& op, const MixedDomain& dom,
                                            std::span<const int> grids,
                                            const std::function<double(Point)>& f,
                                            const std::function<double(Point)>& g_l2,
                                            const std::function<double(Point)>& gn_l1,
                                            const std::function<double(Point)>& gn_l3,
                                            const SolveOptions& opt) {
  std::vector<MixedDnRow> rows;
  for (int n : grids) {
    BoundaryData bc;
    bc.conditions["L2"] = {BcKind::dirichlet, g_l2};
    bc.conditions["L1"] = {BcKind::neumann_y, gn_l1};
    bc.conditions["L3"] = {BcKind::neumann_y, gn_l3};
    const LsqSolution sol = solve_lsq(op, dom, n, bc, f, opt);
    MixedDnRow row;
    row.n = n;
    row.h = sol.u.spec().hx;
    row.sup = sup_norm(sol.u);
    row.residual = sol.residual_norm;
    row.iterations = sol.iterations;
    rows.push_back(row);
  }
  return rows;
}

MaxPrincipleReport max_principle_check(const GridField& u, double residual_inf, double C) {
  const GridGeom& g = *u.geom;
  const GridSpec& s = g.spec;
  MaxPrincipleReport rep;
  bool have_interior = false, have_boundary = false;
  double imax = 0.0, imin = 0.0, bmax = 0.0, bmin = 0.0;
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      if (!g.active(i, j) || s.x(i) < -1e-12) continue;
      const double v = u.at(i, j);
      const bool sub_boundary = g.mask[s.idx(i, j)] == NodeClass::boundary ||
                                i == g.sonic_col;
      if (sub_boundary) {
        bmax = have_boundary ? std::max(bmax, v) : v;
        bmin = have_boundary ? std::min(bmin, v) : v;
        have_boundary = true;
      } else {
        imax = have_interior ? std::max(imax, v) : v;
        imin = have_interior ? std::min(imin, v) : v;
        have_interior = true;
      }
    }
  }
  if (!have_boundary) throw std::invalid_argument("max_principle_check: no elliptic boundary");
  if (!have_interior) {
    imax = bmax;
    imin = bmin;
  }
  rep.interior_max = imax;
  rep.interior_min = imin;
  rep.boundary_max = bmax;
  rep.boundary_min = bmin;
  const double h = std::max(s.hx, s.hy);
  rep.tol = C * (h * h + residual_inf);
  rep.max_ok = imax <= bmax + rep.tol;
  rep.min_ok = imin >= bmin - rep.tol;
  return rep;
}

std::vector<TensorBump> dyadic_test_basis(const Rect& rect, int level) {
  if (level < 0 || level > 12) throw std::invalid_argument("dyadic_test_basis: bad level");
  const int cells = 1 << level;
  const double wx = (rect.x1 - rect.x0) / cells;
  const double wy = (rect.y1 - rect.y0) / cells;
  std::vector<TensorBump> out;
  out.reserve(static_cast<std::size_t>(cells) * cells);
  for (int j = 0; j < cells; ++j) {
    for (int i = 0; i < cells; ++i) {
      TensorBump b;
      b.rx = 0.5 * wx;
      b.ry = 0.5 * wy;
      b.cx = rect.x0 + (i + 0.5) * wx;
      b.cy = rect.y0 + (j + 0.5) * wy;
      b.amp = 1.0;
      out.push_back(b);
    }
  }
  return out;
}

std::vector<TensorBump> staggered_test_basis(const Rect& rect, int level) {
  if (level < 1 || level > 12) throw std::invalid_argument("staggered_test_basis: bad level");
  const int cells = 1 << level;
  const double wx = (rect.x1 - rect.x0) / cells;
  const double wy = (rect.y1 - rect.y0) / cells;
  std::vector<TensorBump> out;
  for (int j = 1; j < cells; ++j) {
    for (int i = 1; i < cells; ++i) {
      TensorBump b;
      b.rx = 0.5 * wx;
      b.ry = 0.5 * wy;
      b.cx = rect.x0 + i * wx;
      b.cy = rect.y0 + j * wy;
      b.amp = 1.0;
      out.push_back(b);
    }
  }
  return out;
}

namespace {

// Adjoint of K u_xx + k K' u_x + u_yy on compactly supported test functions:
// L* xi = K xi_xx + (2 - k) K' xi_x + (1 - k) K'' xi + xi_yy.
double adjoint_on_bump(const OperatorSpec& op, const TensorBump& b, double x, double y) {
  const double k = op.k_factor();
  return op.K.eval(x) * b.dxx(x, y) + (2.0 - k) * op.K.deriv1(x) * b.dx(x, y) +
         (1.0 - k) * op.K.deriv2(x) * b.value(x, y) + b.dyy(x, y);
}

}  // namespace

DualSolveResult distribution_solve(const OperatorSpec& op, const Rect& rect,
                                   const std::function<double(Point)>& f,
                                   const DualOptions& opt) {
  if (op.form == OperatorForm::kappa && !(op.kappa >= 1.0 && op.kappa <= 1.5)) {
    throw std::invalid_argument("distribution_solve: kappa must lie in [1, 3/2]");
  }
  GeomPtr geom = make_grid(rect, opt.grid_n, opt.grid_n);
  const GridSpec& s = geom->spec;

  std::vector<double> wt(s.size());
  for (int j = 0; j < s.ny; ++j) {
    const double cy = (j == 0 || j == s.ny - 1) ? 0.5 : 1.0;
    for (int i = 0; i < s.nx; ++i) {
      const double cx = (i == 0 || i == s.nx - 1) ? 0.5 : 1.0;
      wt[s.idx(i, j)] = s.hx * s.hy * cx * cy;
    }
  }

  std::vector<TensorBump> train;
  for (int l = 1; l <= opt.levels; ++l) {
    const auto lv = dyadic_test_basis(rect, l);
    train.insert(train.end(), lv.begin(), lv.end());
  }
  const int ho_level = opt.holdout_level > 0 ? opt.holdout_level : opt.levels;
  const std::vector<TensorBump> holdout = staggered_test_basis(rect, ho_level);

  // One functional row per bump: sum_i wt_i (L* xi)(node_i) u_i = <f, xi>,
  // normalized by the discrete L2 norm of the kernel L* xi.
  auto bump_row = [&](const TensorBump& b, std::vector<std::pair<int, double>>* entries,
                      double* rhs, double* kernel_norm) {
    const int i0 = std::max(0, static_cast<int>(std::floor((b.cx - b.rx - s.x0) / s.hx)));
    const int i1 = std::min(s.nx - 1, static_cast<int>(std::ceil((b.cx + b.rx - s.x0) / s.hx)));
    const int j0 = std::max(0, static_cast<int>(std::floor((b.cy - b.ry - s.y0) / s.hy)));
    const int j1 = std::min(s.ny - 1, static_cast<int>(std::ceil((b.cy + b.ry - s.y0) / s.hy)));
    entries->clear();
    double r = 0.0, nrm2 = 0.0;
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const double x = s.x(i), y = s.y(j);
        const std::size_t k = s.idx(i, j);
        const double kern = adjoint_on_bump(op, b, x, y);
        const double xi = b.value(x, y);
        if (kern != 0.0) entries->emplace_back(static_cast<int>(k), wt[k] * kern);
        if (xi != 0.0) r += wt[k] * f({x, y}) * xi;
        nrm2 += wt[k] * kern * kern;
      }
    }
    *rhs = r;
    *kernel_norm = std::sqrt(nrm2);
  };

  Csr a;
  a.cols = static_cast<int>(s.size());
  std::vector<double> rhs;
  std::vector<std::pair<int, double>> entries;
  for (const TensorBump& b : train) {
    double r = 0.0, nrm = 0.0;
    bump_row(b, &entries, &r, &nrm);
    if (nrm <= 0.0) continue;
    for (auto& e : entries) e.second /= nrm;
    a.add_row(entries);
    rhs.push_back(r / nrm);
  }

  const long maxit = opt.max_iter > 0 ? opt.max_iter : 20L * a.cols;
  const Csr at = transpose(a);
  CgResult cg = cgls(a, at, rhs, std::vector<double>(a.cols, 0.0), opt.cg_tol, maxit, false);

  DualSolveResult res;
  res.train_count = a.rows;
  res.holdout_count = static_cast<int>(holdout.size());
  res.iterations = cg.iterations;
  res.converged = cg.converged;

  // Reported residuals are the worst bracket mismatch per unit ||L* xi||_h,
  // i.e. the test functions are normalized so their adjoint images are unit
  // vectors. That is the scale on which a dual estimate |<f, xi>| <=
  // C ||L* xi|| controls the solution, and it makes mismatches comparable
  // across basis levels.
  std::vector<double> ax(a.rows);
  spmv(a, cg.x, ax);
  double train_max = 0.0;
  for (int r = 0; r < a.rows; ++r) {
    train_max = std::max(train_max, std::abs(ax[r] - rhs[r]));
  }
  res.train_residual = train_max;

  double hold_max = 0.0;
  for (const TensorBump& b : holdout) {
    double r = 0.0, nrm = 0.0;
    bump_row(b, &entries, &r, &nrm);
    if (nrm <= 0.0) continue;
    double pair = 0.0;
    for (const auto& e : entries) pair += e.second * cg.x[e.first];
    hold_max = std::max(hold_max, std::abs(pair - r) / nrm);
  }
  res.holdout_residual = hold_max;

  res.u = make_field(std::move(geom));
  for (std::size_t k = 0; k < res.u.values.size(); ++k) res.u.values[k] = cg.x[k];
  return res;
}

}  // namespace keldysh
