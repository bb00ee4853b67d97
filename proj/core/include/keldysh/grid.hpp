#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "keldysh/geometry.hpp"

namespace keldysh {

struct Rect {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
};

enum class NodeClass : std::uint8_t {
  exterior = 0,
  interior_elliptic,
  interior_hyperbolic,
  sonic,
  boundary,
};

struct GridSpec {
  int nx = 0, ny = 0;
  double x0 = 0.0, y0 = 0.0;
  double hx = 0.0, hy = 0.0;

  double x(int i) const { return x0 + i * hx; }
  double y(int j) const { return y0 + j * hy; }
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
};

// Immutable grid geometry shared by every field living on the same grid:
// node classification plus the exact left clip abscissa of each row, which the
// area quadrature uses for the partial cell against the curved boundary.
struct GridGeom {
  GridSpec spec;
  std::vector<NodeClass> mask;
  std::vector<double> row_left_x;  // per row: exact left boundary abscissa
  double right_x = 0.0;            // straight right boundary
  int sonic_col = -1;              // column index with x = 0 exactly, -1 if none

  bool active(int i, int j) const {
    return i >= 0 && j >= 0 && i < spec.nx && j < spec.ny &&
           mask[spec.idx(i, j)] != NodeClass::exterior;
  }
};

using GeomPtr = std::shared_ptr<const GridGeom>;

// Node values on a shared grid. `valid` starts as the active set and shrinks
// under operations (differencing) that cannot be formed at some nodes.
struct GridField {
  GeomPtr geom;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  const GridSpec& spec() const { return geom->spec; }
  double& at(int i, int j) { return values[geom->spec.idx(i, j)]; }
  double at(int i, int j) const { return values[geom->spec.idx(i, j)]; }
  bool is_valid(int i, int j) const { return valid[geom->spec.idx(i, j)] != 0; }
};

// Uniform tensor grid over the mixed domain with n nodes across [0, d] scaled
// so hx = hy up to rounding; the sonic line x = 0 and the straight arcs land
// on grid lines exactly.
GeomPtr make_grid(const MixedDomain& dom, int n);

// Uniform nx-by-ny grid over a rectangle. If the rectangle straddles x = 0 the
// node counts must put a grid line at 0 exactly; otherwise throws.
GeomPtr make_grid(const Rect& rect, int nx, int ny);

GridField make_field(GeomPtr geom);
GridField sample(GeomPtr geom, const std::function<double(double, double)>& f);

enum class Deriv { x, y, xx, yy, xy };
// For a field straddling the sonic line, which one-sided family to force on
// the x = 0 column (used to extract per-side derivatives of kinked fields).
enum class SonicSide { centered, left, right };

// Second-order differencing: centered where both neighbors are active, else a
// one-sided second-order stencil toward the available side. Nodes where no
// stencil fits come back invalid.
GridField diff(const GridField& f, Deriv d, SonicSide side = SonicSide::centered);

enum class Region { all, omega_plus, omega_minus };

struct QuadratureResult {
  double value = 0.0;
  double estimated_error = 0.0;  // Richardson estimate from the stride-2 subgrid
};

// Row-based composite trapezoid over the active nodes, with a linear partial
// cell against the exact left boundary abscissa and an exact split at x = 0.
QuadratureResult integrate_area(const GridField& f, Region region = Region::all);

enum class CutMode { none, split };

// Oriented boundary integral of P dx + Q dy over the domain loop, segment-wise
// trapezoid on the arc polylines resampled to roughly `ds`. CutMode::split
// additionally traverses the sonic chord in both orientations, so the result
// is unchanged while the traversal exercises the cut bookkeeping.
double integrate_boundary(const MixedDomain& dom, const std::function<double(Point)>& P,
                          const std::function<double(Point)>& Q, double ds,
                          CutMode mode = CutMode::none);

// Same integral over an arbitrary closed polyline (no resampling).
double integrate_polyline(std::span<const Point> loop, const std::function<double(Point)>& P,
                          const std::function<double(Point)>& Q);

// Bilinear interpolation; at cells touching invalid nodes the cell is shifted
// inward (the stencil extrapolates). Returns NaN when no complete cell is
// within reach.
double interp(const GridField& f, Point p);

// Resample a polyline at arc-length spacing roughly ds (original vertices are
// not kept; endpoints are).
std::vector<Point> resample_polyline(std::span<const Point> verts, double ds);

double sup_norm(const GridField& f);

// Deterministic pairwise summation; the reduction tree depends only on n.
double pairwise_sum(std::span<const double> v);

// CSV dump "x,y,value" with one row per node, row-major.
void write_csv(const GridField& f, const std::string& path);

// Binary dump: 32-byte header {magic "KLGF", u32 nx, u32 ny, f32 hx, hy, x0,
// y0, u32 reserved} followed by row-major float64 values. The mask is not
// stored; read_binary reconstructs a plain rectangle grid.
void write_binary(const GridField& f, const std::string& path);
GridField read_binary(const std::string& path);

}  // namespace keldysh
