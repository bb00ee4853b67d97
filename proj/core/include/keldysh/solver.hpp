#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "keldysh/bump.hpp"
#include "keldysh/grid.hpp"
#include "keldysh/operators.hpp"

namespace keldysh {

// Boundary conditions keyed by arc name. Mixed-domain arcs are "L1", "L2",
// "L3", "Gamma1", "Gamma2"; rectangle edges are "bottom", "right", "top",
// "left". Arcs without an entry carry no condition (that is what makes a
// problem open). neumann_y is the y-derivative, available on horizontal arcs.
enum class BcKind { dirichlet, neumann_y };

struct BoundaryCondition {
  BcKind kind = BcKind::dirichlet;
  std::function<double(Point)> value;
};

struct BoundaryData {
  std::map<std::string, BoundaryCondition> conditions;
};

struct SolveOptions {
  double boundary_weight = 0.0;  // <= 0 picks 1/min(hx, hy)
  double cg_tol = 1e-10;
  long max_iter = 0;             // 0 picks 20 * unknowns
  bool jacobi = true;            // column-norm preconditioning of the normal equations
  std::uint64_t seed = 42;
  bool random_start = false;     // start CG from a seeded random field instead of 0
};

// Least-squares frame: PDE rows at interior nodes weighted by sqrt(hx hy),
// boundary rows weighted by sqrt(w_b ds); solved by conjugate gradients on the
// normal equations. Unknowns never referenced by any row stay zero and are
// counted in `pruned`.
struct LsqSolution {
  GridField u;
  double residual_norm = 0.0;      // full weighted least-squares residual
  double interior_residual = 0.0;  // discrete L2 norm of Lu - f over PDE rows
  double boundary_mismatch = 0.0;  // L2(ds) norm of the boundary defect, unweighted
  long iterations = 0;
  bool converged = false;
  int pruned = 0;
};

LsqSolution solve_lsq(const OperatorSpec& op, const MixedDomain& dom, int n,
                      const BoundaryData& bc, const std::function<double(Point)>& f,
                      const SolveOptions& opt = {});
LsqSolution solve_lsq(const OperatorSpec& op, const Rect& rect, int nx, int ny,
                      const BoundaryData& bc, const std::function<double(Point)>& f,
                      const SolveOptions& opt = {});

// Open problem (data on L1, L2, L3 only) against the closed problem (data on
// the characteristic arcs as well), on the same grid ladder.
struct OverdeterminacyRow {
  int n = 0;
  double h = 0.0;
  double open_residual = 0.0;
  double closed_residual = 0.0;
  double open_sup = 0.0;  // sup norm of the open minimizer
};
std::vector<OverdeterminacyRow> overdeterminacy_experiment(
    const OperatorSpec& op, const MixedDomain& dom, std::span<const int> grids,
    const std::function<double(Point)>& f, const std::function<double(Point)>& g_straight,
    const std::function<double(Point)>& g_char, const SolveOptions& opt = {});

// Dirichlet on L2, y-derivative data on L1 and L3, nothing on the
// characteristic arcs.
struct MixedDnRow {
  int n = 0;
  double h = 0.0;
  double sup = 0.0;       // sup norm of the solve
  double residual = 0.0;  // full least-squares residual
  long iterations = 0;
};
std::vector<MixedDnRow> mixed_dn_experiment(const OperatorSpec& op, const MixedDomain& dom,
                                            std::span<const int> grids,
                                            const std::function<double(Point)>& f,
                                            const std::function<double(Point)>& g_l2,
                                            const std::function<double(Point)>& gn_l1,
                                            const std::function<double(Point)>& gn_l3,
                                            const SolveOptions& opt = {});

// Discrete maximum principle over the elliptic closure x >= 0 of the field's
// active set: interior extrema must not beat the subregion boundary extrema by
// more than C (h^2 + residual_inf).
struct MaxPrincipleReport {
  double interior_max = 0.0, boundary_max = 0.0;
  double interior_min = 0.0, boundary_min = 0.0;
  double tol = 0.0;
  bool max_ok = false, min_ok = false;
};
MaxPrincipleReport max_principle_check(const GridField& u, double residual_inf, double C = 10.0);

// Dyadic lattice of tensor bumps: level l tiles the rectangle with 2^l x 2^l
// cells, one bump per cell supported exactly on it. The staggered variant
// places the same-size bumps at the (2^l - 1)^2 interior cell corners.
std::vector<TensorBump> dyadic_test_basis(const Rect& rect, int level);
std::vector<TensorBump> staggered_test_basis(const Rect& rect, int level);

// Solve L u = f against test functions only: one row per bump demands
// <u, L* xi> = <f, xi> on the quadrature grid. Test functions are normalized
// so their adjoint images have unit discrete L2 norm, and the reported
// residuals are the worst bracket mismatches max_j |<u, L* xi_j> - <f, xi_j>|
// in that normalization (the scale on which a dual estimate controls u, and
// the one that makes mismatches comparable across basis levels). Training
// rows come from dyadic levels 1..levels; the staggered held-out lattice is
// evaluated after the solve and never trained on (holdout_level <= 0 tracks
// the finest training level). The grid must resolve the finest bumps or the
// lattice-sum bracket itself degrades: keep grid_n above 2^(levels+3), with
// 2^(levels+4)+1 (eight cells per bump radius) the measured sweet spot.
// kappa-form operators need kappa in [1, 3/2] (the range with a certified
// adjoint estimate); general-form operators are admitted as given.
struct DualOptions {
  int grid_n = 65;
  int levels = 3;
  int holdout_level = 0;
  double cg_tol = 1e-10;
  long max_iter = 0;
};
struct DualSolveResult {
  GridField u;
  double train_residual = 0.0;
  double holdout_residual = 0.0;
  int train_count = 0, holdout_count = 0;
  long iterations = 0;
  bool converged = false;
};
DualSolveResult distribution_solve(const OperatorSpec& op, const Rect& rect,
                                   const std::function<double(Point)>& f,
                                   const DualOptions& opt = {});

}  // namespace keldysh
