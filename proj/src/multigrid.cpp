#include "helm/multigrid.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "helm/error.hpp"
#include "helm/log.hpp"

namespace helm {

const char* to_string(CycleKind cycle) { return cycle == CycleKind::V ? "V" : "F"; }

std::vector<Grid3> coarsening_trace(const Grid3& finest, const MultigridConfig& cfg) {
  std::vector<Grid3> grids{finest};
  while (true) {
    const Grid3& g = grids.back();
    bool large = true;
    for (int a = 0; a < 3; ++a)
      large = large && (cfg.threshold_inclusive ? g.n[a] >= cfg.coarsen_threshold
                                                : g.n[a] > cfg.coarsen_threshold);
    if (!large) break;
    if (!g.coarsenable()) {
      log_info("coarsening stopped early: grid cannot be coarsened further");
      break;
    }
    grids.push_back(coarsen(g));
  }
  return grids;
}

std::vector<cplx> inverse_diagonal(const OperatorSpec& spec, const Grid3& grid) {
  const BlockExtent& e = spec.extent;
  std::vector<cplx> inv;
  inv.reserve(e.num_owned());
  const double scale = 6.0 / (grid.h * grid.h);
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) {
        const Index3 g = e.local_to_global({i, j, k});
        if (!is_unknown(spec.bc, grid.n, g)) {
          inv.push_back(0.0);
          continue;
        }
        const cplx ap = stencil_at(spec, grid, {i, j, k}).ap;
        if (std::abs(ap) <= 1e-12 * scale) {
          std::ostringstream os;
          os << "diagonal vanishes at vertex (" << g[0] << ", " << g[1] << ", " << g[2]
             << ") on the " << grid.n[0] << "x" << grid.n[1] << "x" << grid.n[2]
             << " grid (k^2 h^2 = 6); choose a different grid";
          throw Error(ErrorCode::ZeroDiagonal, "multigrid", os.str());
        }
        inv.push_back(1.0 / ap);
      }
  return inv;
}

namespace {

void smooth(const OperatorSpec& spec, const Grid3& grid, const std::vector<cplx>& inv_diag,
            HaloField& u, const HaloField& b, HaloField& scratch, double omega, int sweeps,
            const Context& ctx, bool zero_guess) {
  ScopedPhase timer(ctx.clock, phase::kSmoother);
  const BlockExtent& e = spec.extent;
  if (!u.same_shape(b) || !(u.extent() == e) || inv_diag.size() != e.num_owned())
    throw Error(ErrorCode::ShapeMismatch, "multigrid", "smoother operands do not match");
  if (!scratch.same_shape(u)) scratch = HaloField(e);
  for (int s = 0; s < sweeps; ++s) {
    const bool skip_apply = zero_guess && s == 0;
    if (!skip_apply) {
      halo_exchange(u, ctx);
      apply_operator(spec, u, grid, scratch);
    }
    std::size_t p = 0;
    for (int k = 1; k <= e.nz(); ++k)
      for (int j = 1; j <= e.ny(); ++j) {
        const std::size_t row = u.index(1, j, k);
        for (int i = 0; i < e.nx(); ++i, ++p) {
          const std::size_t c = row + static_cast<std::size_t>(i);
          if (skip_apply)
            u.raw()[c] = omega * inv_diag[p] * b.raw()[c];
          else
            u.raw()[c] += omega * inv_diag[p] * (b.raw()[c] - scratch.raw()[c]);
        }
      }
    u.invalidate_halo();
  }
}

// Normalized 1D full-weighting taps at fine offset -1, 0, +1 around `f`.
std::array<double, 3> fw_taps(int f, int n) {
  std::array<double, 3> w{0.25, 0.5, 0.25};
  if (f - 1 < 1) w[0] = 0.0;
  if (f + 1 > n) w[2] = 0.0;
  const double sum = w[0] + w[1] + w[2];
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace

void jacobi_smooth(const OperatorSpec& spec, const Grid3& grid, HaloField& u, const HaloField& b,
                   double omega, int sweeps, const Context& ctx, bool zero_guess) {
  HaloField scratch(spec.extent);
  smooth(spec, grid, inverse_diagonal(spec, grid), u, b, scratch, omega, sweeps, ctx, zero_guess);
}

HaloField restrict_fw(HaloField& r_fine, const Grid3& fine, const Grid3& coarse, BoundaryKind bc,
                      const Context& ctx) {
  ScopedPhase timer(ctx.clock, phase::kTransfer);
  const BlockExtent& fe = r_fine.extent();
  if (fe.global != fine.n || coarse.n[0] != (fine.n[0] + 1) / 2 ||
      coarse.n[1] != (fine.n[1] + 1) / 2 || coarse.n[2] != (fine.n[2] + 1) / 2)
    throw Error(ErrorCode::ShapeMismatch, "multigrid", "restriction between unrelated grids");
  const BlockExtent ce = coarsen_extent(fe, coarse);
  if (ce.empty())
    throw Error(ErrorCode::LevelIncompatible, "multigrid", "fine block has no coarse vertex");
  halo_exchange(r_fine, ctx, HaloScope::Full);
  HaloField out(ce);
  for (int k = 1; k <= ce.nz(); ++k)
    for (int j = 1; j <= ce.ny(); ++j)
      for (int i = 1; i <= ce.nx(); ++i) {
        const Index3 gc = ce.local_to_global({i, j, k});
        if (!is_unknown(bc, coarse.n, gc)) continue;
        const Index3 gf{2 * gc[0] - 1, 2 * gc[1] - 1, 2 * gc[2] - 1};
        const auto wx = fw_taps(gf[0], fine.n[0]);
        const auto wy = fw_taps(gf[1], fine.n[1]);
        const auto wz = fw_taps(gf[2], fine.n[2]);
        const int li = gf[0] - fe.lo[0] + 1;
        const int lj = gf[1] - fe.lo[1] + 1;
        const int lk = gf[2] - fe.lo[2] + 1;
        cplx sum = 0.0;
        for (int dz = -1; dz <= 1; ++dz) {
          if (wz[static_cast<std::size_t>(dz + 1)] == 0.0) continue;
          for (int dy = -1; dy <= 1; ++dy) {
            if (wy[static_cast<std::size_t>(dy + 1)] == 0.0) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const double w = wx[static_cast<std::size_t>(dx + 1)] *
                               wy[static_cast<std::size_t>(dy + 1)] *
                               wz[static_cast<std::size_t>(dz + 1)];
              if (w == 0.0) continue;
              sum += w * r_fine(li + dx, lj + dy, lk + dz);
            }
          }
        }
        out(i, j, k) = sum;
      }
  out.invalidate_halo();
  return out;
}

HaloField prolong_tl(HaloField& e_coarse, const Grid3& coarse, const Grid3& fine,
                     const BlockExtent& fine_extent, BoundaryKind bc, const Context& ctx) {
  ScopedPhase timer(ctx.clock, phase::kTransfer);
  const BlockExtent& ce = e_coarse.extent();
  if (ce.global != coarse.n || fine_extent.global != fine.n ||
      !(coarsen_extent(fine_extent, coarse) == ce))
    throw Error(ErrorCode::ShapeMismatch, "multigrid", "prolongation between unrelated blocks");
  halo_exchange(e_coarse, ctx, HaloScope::Full);
  HaloField out(fine_extent);
  for (int k = 1; k <= fine_extent.nz(); ++k)
    for (int j = 1; j <= fine_extent.ny(); ++j)
      for (int i = 1; i <= fine_extent.nx(); ++i) {
        const Index3 gf = fine_extent.local_to_global({i, j, k});
        if (!is_unknown(bc, fine.n, gf)) continue;
        // Per axis: one coincident coarse vertex, or two at weight 1/2.
        std::array<int, 3> lo{}, cnt{};
        for (int a = 0; a < 3; ++a) {
          if (gf[a] % 2 == 1) {
            lo[a] = (gf[a] + 1) / 2;
            cnt[a] = 1;
          } else {
            lo[a] = gf[a] / 2;
            cnt[a] = 2;
          }
          lo[a] -= ce.lo[a] - 1;
        }
        const double w = 1.0 / (cnt[0] * cnt[1] * cnt[2]);
        cplx sum = 0.0;
        for (int dz = 0; dz < cnt[2]; ++dz)
          for (int dy = 0; dy < cnt[1]; ++dy)
            for (int dx = 0; dx < cnt[0]; ++dx) sum += e_coarse(lo[0] + dx, lo[1] + dy, lo[2] + dz);
        out(i, j, k) = w * sum;
      }
  out.invalidate_halo();
  return out;
}

SolveResult coarsest_solve(const OperatorSpec& spec, const Grid3& grid, const HaloField& b,
                           double tol, int maxit, const Context& ctx) {
  ScopedPhase timer(ctx.clock, phase::kCoarsest);
  // Everything inside accrues to the coarsest phase.
  Context quiet = ctx;
  quiet.clock = nullptr;
  SolverConfig cfg;
  cfg.method = KrylovMethod::Gmres;
  cfg.tol = tol;
  cfg.maxit = maxit;
  cfg.side = PrecondSide::None;
  cfg.warn_on_failure = false;
  return gmres(stencil_operator(spec, grid, quiet), {}, b, cfg, quiet);
}

MGHierarchy build_hierarchy(const Grid3& finest_grid, const OperatorSpec& finest,
                            const MultigridConfig& cfg, const Context& ctx) {
  MGHierarchy hier;
  hier.config = cfg;
  hier.ctx = ctx;
  const std::vector<Grid3> grids = coarsening_trace(finest_grid, cfg);
  if (grids.size() == 1)
    log_warning("grid is below the coarsening threshold; the preconditioner is a single GMRES solve");

  std::vector<BlockExtent> layout = partition_grid(finest_grid, ctx.topology);
  if (!(layout[static_cast<std::size_t>(ctx.rank())] == finest.extent))
    throw Error(ErrorCode::ShapeMismatch, "multigrid",
                "finest operator block differs from this rank's partition block");
  OperatorSpec spec = finest;
  for (std::size_t l = 0; l < grids.size(); ++l) {
    if (l > 0) {
      layout = coarsen_partition(layout, grids[l]);
      spec = reduce_to_spec(spec, grids[l]);
    }
    MGLevel level;
    level.grid = grids[l];
    level.spec = spec;
    level.layout = layout;
    if (l + 1 < grids.size()) level.inv_diag = inverse_diagonal(spec, grids[l]);
    level.x = HaloField(spec.extent);
    level.b = HaloField(spec.extent);
    level.r = HaloField(spec.extent);
    hier.levels.push_back(std::move(level));
  }
  if (ctx.rank() == 0) {
    std::ostringstream os;
    os << "multigrid levels:";
    for (const auto& g : grids) os << ' ' << g.n[0] << 'x' << g.n[1] << 'x' << g.n[2];
    log_info(os.str());
  }
  return hier;
}

namespace {

void solve_coarsest(MGHierarchy& hier, HaloField& x, const HaloField& b, bool zero_guess) {
  MGLevel& lv = hier.levels.back();
  const Context& ctx = hier.ctx;
  const HaloField* rhs = &b;
  if (!zero_guess) {
    halo_exchange(x, ctx);
    apply_operator(lv.spec, x, lv.grid, lv.r);
    for (int k = 1; k <= lv.r.nz(); ++k)
      for (int j = 1; j <= lv.r.ny(); ++j)
        for (int i = 1; i <= lv.r.nx(); ++i) lv.r(i, j, k) = b(i, j, k) - lv.r(i, j, k);
    rhs = &lv.r;
  }
  SolveResult res = coarsest_solve(lv.spec, lv.grid, *rhs, hier.config.coarsest_tol,
                                   hier.config.coarsest_maxit, ctx);
  CoarsestStats& st = hier.coarsest;
  ++st.solves;
  st.max_iterations = std::max(st.max_iterations, res.report.iterations);
  st.worst_residual = std::max(st.worst_residual, res.report.true_residual);
  if (!res.report.converged) st.all_converged = false;
  if (zero_guess)
    copy_owned(res.x, x);
  else
    axpy(1.0, res.x, x);
}

void cycle(MGHierarchy& hier, std::size_t l, CycleKind kind, HaloField& x, const HaloField& b,
           bool zero_guess) {
  if (l + 1 == hier.levels.size()) {
    solve_coarsest(hier, x, b, zero_guess);
    return;
  }
  MGLevel& lv = hier.levels[l];
  MGLevel& next = hier.levels[l + 1];
  const MultigridConfig& cfg = hier.config;
  const Context& ctx = hier.ctx;

  if (zero_guess && cfg.nu1 == 0) set_zero(x);
  if (cfg.nu1 > 0)
    smooth(lv.spec, lv.grid, lv.inv_diag, x, b, lv.r, cfg.omega, cfg.nu1, ctx, zero_guess);

  {
    ScopedPhase timer(ctx.clock, phase::kSmoother);
    halo_exchange(x, ctx);
    apply_operator(lv.spec, x, lv.grid, lv.r);
    for (int k = 1; k <= lv.r.nz(); ++k)
      for (int j = 1; j <= lv.r.ny(); ++j)
        for (int i = 1; i <= lv.r.nx(); ++i) lv.r(i, j, k) = b(i, j, k) - lv.r(i, j, k);
  }
  next.b = restrict_fw(lv.r, lv.grid, next.grid, lv.spec.bc, ctx);

  const bool next_is_coarsest = l + 2 == hier.levels.size();
  if (kind == CycleKind::F && !next_is_coarsest) {
    cycle(hier, l + 1, CycleKind::F, next.x, next.b, true);
    cycle(hier, l + 1, CycleKind::V, next.x, next.b, false);
  } else {
    cycle(hier, l + 1, CycleKind::V, next.x, next.b, true);
  }

  HaloField correction = prolong_tl(next.x, next.grid, lv.grid, lv.spec.extent, lv.spec.bc, ctx);
  axpy(1.0, correction, x);
  if (cfg.nu2 > 0)
    smooth(lv.spec, lv.grid, lv.inv_diag, x, b, lv.r, cfg.omega, cfg.nu2, ctx, false);
}

}  // namespace

void mg_precondition(MGHierarchy& hier, const HaloField& r, HaloField& z) {
  MGLevel& top = hier.levels.front();
  if (!(r.extent() == top.spec.extent))
    throw Error(ErrorCode::ShapeMismatch, "multigrid", "residual does not live on the finest block");
  copy_owned(r, top.b);
  cycle(hier, 0, hier.config.cycle, top.x, top.b, true);
  copy_owned(top.x, z);
}

HaloField mg_precondition(MGHierarchy& hier, const HaloField& r) {
  HaloField z(r.extent());
  mg_precondition(hier, r, z);
  return z;
}

LinearOperator as_preconditioner(MGHierarchy& hier) {
  return [&hier](HaloField& r, HaloField& z) { mg_precondition(hier, r, z); };
}

}  // namespace helm
