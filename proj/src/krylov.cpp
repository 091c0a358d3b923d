#include "helm/krylov.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "helm/error.hpp"
#include "helm/log.hpp"

namespace helm {

namespace {

// Calls fn(offset, length) for every contiguous i1-row of the owned region.
template <typename Fn>
void for_rows(const HaloField& f, Fn&& fn) {
  const int nx = f.nx();
  for (int k = 1; k <= f.nz(); ++k)
    for (int j = 1; j <= f.ny(); ++j) fn(f.index(1, j, k), nx);
}

void require_same(const HaloField& a, const HaloField& b) {
  if (!a.same_shape(b))
    throw Error(ErrorCode::ShapeMismatch, "krylov", "vectors live on different blocks");
}

cplx local_dot(const HaloField& u, const HaloField& v) {
  cplx sum = 0.0;
  const cplx* up = u.raw().data();
  const cplx* vp = v.raw().data();
  for_rows(u, [&](std::size_t o, int len) {
    for (int i = 0; i < len; ++i) sum += std::conj(up[o + i]) * vp[o + i];
  });
  return sum;
}

}  // namespace

cplx dot(const HaloField& u, const HaloField& v, const Context& ctx) {
  require_same(u, v);
  ScopedPhase timer(ctx.clock, phase::kDot);
  return ctx.fabric->allreduce_sum(local_dot(u, v));
}

double norm(const HaloField& u, const Context& ctx) {
  return std::sqrt(std::max(0.0, dot(u, u, ctx).real()));
}

std::vector<cplx> dot_many(std::span<const HaloField* const> us, const HaloField& v,
                           const Context& ctx) {
  ScopedPhase timer(ctx.clock, phase::kDot);
  std::vector<cplx> out;
  out.reserve(us.size());
  for (const HaloField* u : us) {
    require_same(*u, v);
    out.push_back(local_dot(*u, v));
  }
  ctx.fabric->allreduce_sum(out);
  return out;
}

void axpy(cplx a, const HaloField& x, HaloField& y) {
  require_same(x, y);
  const cplx* xp = x.raw().data();
  cplx* yp = y.raw().data();
  for_rows(x, [&](std::size_t o, int len) {
    for (int i = 0; i < len; ++i) yp[o + i] += a * xp[o + i];
  });
  y.invalidate_halo();
}

void xpby(const HaloField& x, cplx b, HaloField& y) {
  require_same(x, y);
  const cplx* xp = x.raw().data();
  cplx* yp = y.raw().data();
  for_rows(x, [&](std::size_t o, int len) {
    for (int i = 0; i < len; ++i) yp[o + i] = xp[o + i] + b * yp[o + i];
  });
  y.invalidate_halo();
}

void scale(cplx a, HaloField& x) {
  cplx* xp = x.raw().data();
  for_rows(x, [&](std::size_t o, int len) {
    for (int i = 0; i < len; ++i) xp[o + i] *= a;
  });
  x.invalidate_halo();
}

void copy_owned(const HaloField& src, HaloField& dst) {
  if (!dst.same_shape(src)) dst = HaloField(src.extent());
  const cplx* sp = src.raw().data();
  cplx* dp = dst.raw().data();
  for_rows(src, [&](std::size_t o, int len) { std::copy(sp + o, sp + o + len, dp + o); });
  dst.invalidate_halo();
}

void set_zero(HaloField& x) {
  x.fill(0.0);
  x.invalidate_halo();
}

LinearOperator stencil_operator(const OperatorSpec& spec, const Grid3& grid, const Context& ctx) {
  auto shared = std::make_shared<const OperatorSpec>(spec);
  return [shared, grid, ctx](HaloField& x, HaloField& y) {
    halo_exchange(x, ctx);
    apply_operator(*shared, x, grid, y);
  };
}

const char* to_string(KrylovMethod method) {
  switch (method) {
    case KrylovMethod::Gmres: return "gmres";
    case KrylovMethod::Bicgstab: return "bicgstab";
    case KrylovMethod::Idrs: return "idrs";
  }
  return "?";
}

const char* to_string(PrecondSide side) {
  switch (side) {
    case PrecondSide::Auto: return "auto";
    case PrecondSide::Left: return "left";
    case PrecondSide::Right: return "right";
    case PrecondSide::None: return "none";
  }
  return "?";
}

PrecondSide resolved_side(const SolverConfig& cfg) {
  if (cfg.side != PrecondSide::Auto) return cfg.side;
  return cfg.method == KrylovMethod::Gmres ? PrecondSide::Left : PrecondSide::Right;
}

cplx shadow_entry(std::uint64_t seed, int column, const Index3& g, const Index3& n) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  const std::uint64_t lin =
      static_cast<std::uint64_t>(g[0] - 1) +
      static_cast<std::uint64_t>(n[0]) *
          (static_cast<std::uint64_t>(g[1] - 1) +
           static_cast<std::uint64_t>(n[1]) * static_cast<std::uint64_t>(g[2] - 1));
  const std::uint64_t key = (lin << 8) | static_cast<std::uint64_t>(column & 0xff);
  const std::uint64_t a = mix(seed ^ mix(2 * key));
  const std::uint64_t b = mix(seed ^ mix(2 * key + 1));
  constexpr double unit = 1.0 / 9007199254740992.0;  // 2^-53
  return {2.0 * static_cast<double>(a >> 11) * unit - 1.0,
          2.0 * static_cast<double>(b >> 11) * unit - 1.0};
}

// ------------------------------------------------------------ cores
// Each core solves Op y = c from y = 0 without preconditioning; the driver
// folds the preconditioner into Op and c.

namespace {

struct Monitor {
  const SolverConfig& cfg;
  ConvergenceReport& report;

  void record(double relres) {
    report.residual_history.push_back(relres);
    if (cfg.residual_log)
      *cfg.residual_log << report.residual_history.size() - 1 << ',' << relres << '\n';
  }
};

constexpr double kBreakdown = 1e-30;

void gmres_core(const LinearOperator& op, const HaloField& c, const SolverConfig& cfg,
                const Context& ctx, ConvergenceReport& rep, HaloField& y) {
  Monitor mon{cfg, rep};
  y = HaloField(c.extent());
  const double ref = norm(c, ctx);
  mon.record(ref == 0.0 ? 0.0 : 1.0);
  if (ref == 0.0) {
    rep.converged = true;
    rep.status = "converged";
    return;
  }
  const int m = cfg.restart > 0 ? cfg.restart : cfg.maxit;
  HaloField r(c.extent());
  copy_owned(c, r);
  bool breakdown = false;

  while (true) {
    const double beta = norm(r, ctx);
    std::vector<HaloField> V;
    V.reserve(static_cast<std::size_t>(std::min(m, cfg.maxit - rep.iterations)) + 1);
    V.emplace_back(c.extent());
    copy_owned(r, V[0]);
    scale(1.0 / beta, V[0]);
    std::vector<std::vector<cplx>> H;  // H[j] is column j, length j+2
    std::vector<double> cs;
    std::vector<cplx> sn;
    std::vector<cplx> g{beta};
    double relres = beta / ref;
    int j = 0;
    for (; j < m && rep.iterations < cfg.maxit; ++j) {
      HaloField w(c.extent());
      op(V[static_cast<std::size_t>(j)], w);
      ++rep.iterations;
      std::vector<cplx> h(static_cast<std::size_t>(j) + 2);
      for (int i = 0; i <= j; ++i) {
        h[static_cast<std::size_t>(i)] = dot(V[static_cast<std::size_t>(i)], w, ctx);
        axpy(-h[static_cast<std::size_t>(i)], V[static_cast<std::size_t>(i)], w);
      }
      const double hnext = norm(w, ctx);
      h[static_cast<std::size_t>(j) + 1] = hnext;
      for (int i = 0; i < j; ++i) {
        const cplx t = cs[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)] +
                       sn[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i) + 1];
        h[static_cast<std::size_t>(i) + 1] =
            -std::conj(sn[static_cast<std::size_t>(i)]) * h[static_cast<std::size_t>(i)] +
            cs[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i) + 1];
        h[static_cast<std::size_t>(i)] = t;
      }
      const cplx a = h[static_cast<std::size_t>(j)];
      const double t = std::hypot(std::abs(a), hnext);
      double cj = 0.0;
      cplx sj = 1.0;
      if (std::abs(a) != 0.0) {
        cj = std::abs(a) / t;
        sj = (a / std::abs(a)) * hnext / t;
      }
      cs.push_back(cj);
      sn.push_back(sj);
      h[static_cast<std::size_t>(j)] = cj * a + sj * hnext;
      h[static_cast<std::size_t>(j) + 1] = 0.0;
      g.push_back(-std::conj(sj) * g[static_cast<std::size_t>(j)]);
      g[static_cast<std::size_t>(j)] *= cj;
      H.push_back(std::move(h));
      relres = std::abs(g[static_cast<std::size_t>(j) + 1]) / ref;
      mon.record(relres);
      if (relres <= cfg.tol) {
        ++j;
        break;
      }
      if (hnext <= kBreakdown) {
        breakdown = true;
        ++j;
        break;
      }
      V.emplace_back(c.extent());
      copy_owned(w, V.back());
      scale(1.0 / hnext, V.back());
    }

    std::vector<cplx> coef(static_cast<std::size_t>(j));
    for (int i = j - 1; i >= 0; --i) {
      cplx sum = g[static_cast<std::size_t>(i)];
      for (int l = i + 1; l < j; ++l)
        sum -= H[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] *
               coef[static_cast<std::size_t>(l)];
      coef[static_cast<std::size_t>(i)] = sum / H[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < j; ++i)
      axpy(coef[static_cast<std::size_t>(i)], V[static_cast<std::size_t>(i)], y);

    if (relres <= cfg.tol) {
      rep.converged = true;
      rep.status = "converged";
      return;
    }
    if (breakdown) {
      rep.status = "breakdown";
      return;
    }
    if (rep.iterations >= cfg.maxit) {
      rep.status = "max-iterations";
      return;
    }
    // Restart from the true residual of the current iterate.
    HaloField ay(c.extent());
    op(y, ay);
    copy_owned(c, r);
    axpy(-1.0, ay, r);
  }
}

void bicgstab_core(const LinearOperator& op, const HaloField& c, const SolverConfig& cfg,
                   const Context& ctx, ConvergenceReport& rep, HaloField& y) {
  Monitor mon{cfg, rep};
  const BlockExtent& e = c.extent();
  y = HaloField(e);
  const double ref = norm(c, ctx);
  mon.record(ref == 0.0 ? 0.0 : 1.0);
  if (ref == 0.0) {
    rep.converged = true;
    rep.status = "converged";
    return;
  }
  HaloField r(e), rhat(e), p(e), v(e), t(e);
  copy_owned(c, r);
  copy_owned(c, rhat);
  cplx rho = 1.0, alpha = 1.0, omega = 1.0;
  rep.status = "max-iterations";
  for (int it = 1; it <= cfg.maxit; ++it) {
    const cplx rho1 = dot(rhat, r, ctx);
    if (std::abs(rho1) < kBreakdown) {
      rep.status = "breakdown";
      return;
    }
    if (it == 1) {
      copy_owned(r, p);
    } else {
      const cplx beta = (rho1 / rho) * (alpha / omega);
      axpy(-omega, v, p);
      xpby(r, beta, p);
    }
    op(p, v);
    const cplx sigma = dot(rhat, v, ctx);
    if (std::abs(sigma) < kBreakdown) {
      rep.status = "breakdown";
      return;
    }
    alpha = rho1 / sigma;
    axpy(-alpha, v, r);  // r now holds s
    axpy(alpha, p, y);
    rep.iterations = it;
    const double ns = norm(r, ctx) / ref;
    if (ns <= cfg.tol) {
      mon.record(ns);
      rep.converged = true;
      rep.status = "converged";
      return;
    }
    op(r, t);
    const double tt = dot(t, t, ctx).real();
    if (tt < kBreakdown) {
      mon.record(ns);
      rep.status = "breakdown";
      return;
    }
    omega = dot(t, r, ctx) / tt;
    axpy(omega, r, y);
    axpy(-omega, t, r);
    const double relres = norm(r, ctx) / ref;
    mon.record(relres);
    if (relres <= cfg.tol) {
      rep.converged = true;
      rep.status = "converged";
      return;
    }
    if (std::abs(omega) < kBreakdown) {
      rep.status = "breakdown";
      return;
    }
    rho = rho1;
  }
}

void idr_core(const LinearOperator& op, const HaloField& c, const SolverConfig& cfg,
              const Context& ctx, ConvergenceReport& rep, HaloField& y) {
  Monitor mon{cfg, rep};
  const BlockExtent& e = c.extent();
  const int s = cfg.s;
  if (s < 1) throw Error(ErrorCode::InvalidValue, "krylov", "IDR(s) needs s >= 1");
  const auto us = static_cast<std::size_t>(s);
  y = HaloField(e);
  rep.seed = cfg.rng_seed;
  const double ref = norm(c, ctx);
  mon.record(ref == 0.0 ? 0.0 : 1.0);
  if (ref == 0.0) {
    rep.converged = true;
    rep.status = "converged";
    return;
  }

  // Shadow space: seeded random columns, orthonormalized.
  std::vector<HaloField> P(us, HaloField(e));
  for (int q = 0; q < s; ++q) {
    HaloField& pq = P[static_cast<std::size_t>(q)];
    for (int k = 1; k <= pq.nz(); ++k)
      for (int j = 1; j <= pq.ny(); ++j)
        for (int i = 1; i <= pq.nx(); ++i)
          pq(i, j, k) = shadow_entry(cfg.rng_seed, q, e.local_to_global({i, j, k}), e.global);
    for (int l = 0; l < q; ++l)
      axpy(-dot(P[static_cast<std::size_t>(l)], pq, ctx), P[static_cast<std::size_t>(l)], pq);
    scale(1.0 / norm(pq, ctx), pq);
  }
  std::vector<const HaloField*> Pptr;
  for (const auto& pq : P) Pptr.push_back(&pq);

  std::vector<HaloField> G(us, HaloField(e)), U(us, HaloField(e));
  std::vector<std::vector<cplx>> M(us, std::vector<cplx>(us, 0.0));
  for (std::size_t q = 0; q < us; ++q) M[q][q] = 1.0;
  HaloField r(e), v(e), t(e), work(e);
  copy_owned(c, r);
  cplx om = 1.0;
  double relres = 1.0;
  std::vector<cplx> cvec(us);
  rep.status = "max-iterations";

  auto finish = [&](bool ok, const char* status) {
    rep.converged = ok;
    rep.status = status;
  };

  while (relres > cfg.tol && rep.iterations < cfg.maxit) {
    std::vector<cplx> f = dot_many(Pptr, r, ctx);
    for (std::size_t k = 0; k < us; ++k) {
      for (std::size_t i = k; i < us; ++i) {
        cplx sum = f[i];
        for (std::size_t l = k; l < i; ++l) sum -= M[i][l] * cvec[l];
        cvec[i] = sum / M[i][i];
      }
      copy_owned(r, v);
      for (std::size_t i = k; i < us; ++i) axpy(-cvec[i], G[i], v);
      copy_owned(v, work);
      scale(om, work);
      for (std::size_t i = k; i < us; ++i) axpy(cvec[i], U[i], work);
      copy_owned(work, U[k]);
      op(U[k], G[k]);
      ++rep.iterations;
      for (std::size_t i = 0; i < k; ++i) {
        const cplx alpha = dot(P[i], G[k], ctx) / M[i][i];
        axpy(-alpha, G[i], G[k]);
        axpy(-alpha, U[i], U[k]);
      }
      const std::vector<cplx> mk =
          dot_many(std::span<const HaloField* const>(Pptr).subspan(k), G[k], ctx);
      for (std::size_t i = k; i < us; ++i) M[i][k] = mk[i - k];
      if (std::abs(M[k][k]) < kBreakdown) {
        finish(false, "breakdown");
        return;
      }
      const cplx beta = f[k] / M[k][k];
      axpy(-beta, G[k], r);
      axpy(beta, U[k], y);
      relres = norm(r, ctx) / ref;
      mon.record(relres);
      if (relres <= cfg.tol) {
        finish(true, "converged");
        return;
      }
      if (rep.iterations >= cfg.maxit) return;
      for (std::size_t i = k + 1; i < us; ++i) f[i] -= beta * M[i][k];
    }

    // Dimension reduction step.
    copy_owned(r, v);
    op(v, t);
    ++rep.iterations;
    const double nt = norm(t, ctx);
    const double nr = norm(r, ctx);
    const cplx ts = dot(t, r, ctx);
    if (nt == 0.0) {
      finish(false, "breakdown");
      return;
    }
    om = ts / (nt * nt);
    const double rho = std::abs(ts) / (nt * nr);
    constexpr double kappa = 0.7;
    if (rho < kappa) om *= kappa / rho;
    if (std::abs(om) < kBreakdown) {
      finish(false, "breakdown");
      return;
    }
    axpy(-om, t, r);
    axpy(om, v, y);
    relres = norm(r, ctx) / ref;
    mon.record(relres);
  }
  if (relres <= cfg.tol) finish(true, "converged");
}

using Core = void (*)(const LinearOperator&, const HaloField&, const SolverConfig&, const Context&,
                      ConvergenceReport&, HaloField&);

std::map<std::string, double> phase_delta(const Context& ctx,
                                          const std::map<std::string, double>& before) {
  std::map<std::string, double> out;
  if (!ctx.clock) return out;
  for (const auto& [name, secs] : ctx.clock->seconds()) {
    const auto it = before.find(name);
    out[name] = secs - (it == before.end() ? 0.0 : it->second);
  }
  return out;
}

SolveResult drive(Core core, KrylovMethod method, const LinearOperator& A,
                  const LinearOperator& precond, const HaloField& b, const SolverConfig& cfg,
                  const Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  const std::map<std::string, double> before =
      ctx.clock ? ctx.clock->seconds() : std::map<std::string, double>{};
  SolveResult out;
  ConvergenceReport& rep = out.report;
  rep.method = to_string(method);
  PrecondSide side = resolved_side(cfg);
  if (!precond) side = PrecondSide::None;
  rep.side = to_string(side);

  auto apply_a = [&](HaloField& x, HaloField& y) {
    ScopedPhase timer(ctx.clock, phase::kMatvec);
    A(x, y);
    ++rep.matvec_count;
  };
  auto apply_m = [&](HaloField& x, HaloField& y) {
    ScopedPhase timer(ctx.clock, phase::kPrecond);
    precond(x, y);
    ++rep.precond_count;
  };

  HaloField tmp(b.extent());
  HaloField y;
  switch (side) {
    case PrecondSide::Left: {
      HaloField c(b.extent());
      HaloField bb = b;
      apply_m(bb, c);
      LinearOperator op = [&](HaloField& x, HaloField& z) {
        apply_a(x, tmp);
        apply_m(tmp, z);
      };
      core(op, c, cfg, ctx, rep, y);
      out.x = std::move(y);
      break;
    }
    case PrecondSide::Right: {
      LinearOperator op = [&](HaloField& x, HaloField& z) {
        apply_m(x, tmp);
        apply_a(tmp, z);
      };
      core(op, b, cfg, ctx, rep, y);
      out.x = HaloField(b.extent());
      apply_m(y, out.x);
      break;
    }
    case PrecondSide::None:
    case PrecondSide::Auto: {
      LinearOperator op = [&](HaloField& x, HaloField& z) { apply_a(x, z); };
      core(op, b, cfg, ctx, rep, y);
      out.x = std::move(y);
      break;
    }
  }

  // One uncounted product to report the true residual.
  const double bnorm = norm(b, ctx);
  if (bnorm > 0.0) {
    HaloField ax(b.extent());
    {
      ScopedPhase timer(ctx.clock, phase::kMatvec);
      A(out.x, ax);
    }
    HaloField r(b.extent());
    copy_owned(b, r);
    axpy(-1.0, ax, r);
    rep.true_residual = norm(r, ctx) / bnorm;
  }
  out.x.invalidate_halo();

  rep.phase_times = phase_delta(ctx, before);
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!rep.converged && cfg.warn_on_failure && ctx.rank() == 0)
    log_warning(std::string(rep.method) + " stopped without converging (" + rep.status + ")");
  return out;
}

}  // namespace

SolveResult gmres(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                  SolverConfig cfg, const Context& ctx) {
  cfg.method = KrylovMethod::Gmres;
  return drive(&gmres_core, cfg.method, A, precond, b, cfg, ctx);
}

SolveResult bicgstab(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                     SolverConfig cfg, const Context& ctx) {
  cfg.method = KrylovMethod::Bicgstab;
  return drive(&bicgstab_core, cfg.method, A, precond, b, cfg, ctx);
}

SolveResult idr_s(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                  SolverConfig cfg, const Context& ctx) {
  cfg.method = KrylovMethod::Idrs;
  return drive(&idr_core, cfg.method, A, precond, b, cfg, ctx);
}

SolveResult solve(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                  const SolverConfig& cfg, const Context& ctx) {
  switch (cfg.method) {
    case KrylovMethod::Gmres: return gmres(A, precond, b, cfg, ctx);
    case KrylovMethod::Bicgstab: return bicgstab(A, precond, b, cfg, ctx);
    case KrylovMethod::Idrs: return idr_s(A, precond, b, cfg, ctx);
  }
  throw Error(ErrorCode::InvalidValue, "krylov", "unknown method");
}

}  // namespace helm
