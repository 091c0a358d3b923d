#pragma once

#include <vector>

#include "helm/grid.hpp"
#include "helm/krylov.hpp"
#include "helm/operators.hpp"
#include "helm/partition.hpp"

namespace helm {

enum class CycleKind { V, F };

const char* to_string(CycleKind cycle);

struct MultigridConfig {
  double omega = 0.8;
  int nu1 = 1;
  int nu2 = 1;
  CycleKind cycle = CycleKind::V;
  /// Coarsen while every dimension is >= threshold (or > when not inclusive).
  int coarsen_threshold = 17;
  bool threshold_inclusive = true;
  double coarsest_tol = 1e-11;
  int coarsest_maxit = 2000;

  bool operator==(const MultigridConfig&) const = default;
};

struct MGLevel {
  Grid3 grid;
  OperatorSpec spec;
  /// Block of every rank on this level.
  std::vector<BlockExtent> layout;
  /// omega-free inverse diagonal per owned vertex; 0 on eliminated vertices.
  std::vector<cplx> inv_diag;
  HaloField x, b, r;
};

struct CoarsestStats {
  int solves = 0;
  int max_iterations = 0;
  double worst_residual = 0.0;
  bool all_converged = true;
};

struct MGHierarchy {
  std::vector<MGLevel> levels;
  MultigridConfig config;
  Context ctx;
  CoarsestStats coarsest;
};

/// Grids visited by the coarsening rule, finest first.
std::vector<Grid3> coarsening_trace(const Grid3& finest, const MultigridConfig& cfg);

/// Builds every level by rediscretizing `finest` (usually the CSLP operator)
/// on the coarser grids. `finest.extent` must be this rank's block of the
/// partition of `finest_grid` over ctx.topology.
MGHierarchy build_hierarchy(const Grid3& finest_grid, const OperatorSpec& finest,
                            const MultigridConfig& cfg, const Context& ctx = serial_context());

/// 1 / ap per owned vertex. Throws zero-diagonal when an unknown has ap = 0.
std::vector<cplx> inverse_diagonal(const OperatorSpec& spec, const Grid3& grid);

/// `sweeps` damped Jacobi steps u <- u + omega D^-1 (b - M u), with a halo
/// exchange before each sweep. `zero_guess` lets the first sweep skip M u.
void jacobi_smooth(const OperatorSpec& spec, const Grid3& grid, HaloField& u, const HaloField& b,
                   double omega, int sweeps, const Context& ctx = serial_context(),
                   bool zero_guess = false);

/// Full weighting onto the coarse block induced by the fine block. Taps that
/// fall outside the domain are dropped and the remaining weights rescaled.
HaloField restrict_fw(HaloField& r_fine, const Grid3& fine, const Grid3& coarse, BoundaryKind bc,
                      const Context& ctx = serial_context());

/// Trilinear interpolation onto `fine_extent`.
HaloField prolong_tl(HaloField& e_coarse, const Grid3& coarse, const Grid3& fine,
                     const BlockExtent& fine_extent, BoundaryKind bc,
                     const Context& ctx = serial_context());

/// Unpreconditioned full GMRES on the coarsest system from x = 0.
SolveResult coarsest_solve(const OperatorSpec& spec, const Grid3& grid, const HaloField& b,
                           double tol, int maxit, const Context& ctx = serial_context());

/// z = one cycle applied to r with zero initial guess.
void mg_precondition(MGHierarchy& hier, const HaloField& r, HaloField& z);
HaloField mg_precondition(MGHierarchy& hier, const HaloField& r);

/// Preconditioner callback sharing the hierarchy; the hierarchy must outlive it.
LinearOperator as_preconditioner(MGHierarchy& hier);

}  // namespace helm
