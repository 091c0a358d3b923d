#include "helm/operators.hpp"

#include <cmath>
#include <sstream>

#include "helm/error.hpp"
#include "helm/log.hpp"
#include "helm/partition.hpp"

namespace helm {

const char* to_string(OperatorKind kind) {
  return kind == OperatorKind::Helmholtz ? "helmholtz" : "cslp";
}

const char* to_string(BoundaryKind bc) {
  return bc == BoundaryKind::Dirichlet ? "dirichlet" : "sommerfeld";
}

OperatorSpec OperatorSpec::as_cslp(double b1, double b2) const {
  OperatorSpec s = *this;
  s.kind = OperatorKind::Cslp;
  s.beta1 = b1;
  s.beta2 = b2;
  return s;
}

OperatorSpec make_spec(OperatorKind kind, BoundaryKind bc, const BlockExtent& extent,
                       std::vector<double> k, double beta1, double beta2) {
  if (k.size() != extent.num_owned())
    throw Error(ErrorCode::ShapeMismatch, "operators", "wavenumber field does not match the block");
  OperatorSpec s;
  s.kind = kind;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.bc = bc;
  s.extent = extent;
  s.k = std::move(k);
  return s;
}

OperatorSpec make_constant_spec(OperatorKind kind, BoundaryKind bc, const BlockExtent& extent,
                                double k, double beta1, double beta2) {
  return make_spec(kind, bc, extent, std::vector<double>(extent.num_owned(), k), beta1, beta2);
}

bool is_unknown(BoundaryKind bc, const Index3& n, const Index3& g) {
  if (bc == BoundaryKind::Sommerfeld) return true;
  for (int a = 0; a < 3; ++a)
    if (g[a] == 1 || g[a] == n[a]) return false;
  return true;
}

StencilCoeffs stencil_at(const OperatorSpec& spec, const Grid3& grid, const Index3& local) {
  const Index3 g = spec.extent.local_to_global(local);
  const Index3& n = grid.n;
  const double h = grid.h;
  const double inv_h2 = 1.0 / (h * h);
  const double kk = spec.k_at(local[0], local[1], local[2]);
  StencilCoeffs c{};
  if (!is_unknown(spec.bc, n, g)) return c;

  c.ap = 6.0 * inv_h2 - spec.shift() * (kk * kk);
  cplx* lo_side[3] = {&c.aw, &c.as, &c.ad};
  cplx* hi_side[3] = {&c.ae, &c.an, &c.au};
  for (int a = 0; a < 3; ++a) {
    *lo_side[a] = -inv_h2;
    *hi_side[a] = -inv_h2;
    if (spec.bc == BoundaryKind::Dirichlet) {
      Index3 lo = g, hi = g;
      lo[a] -= 1;
      hi[a] += 1;
      if (!is_unknown(spec.bc, n, lo)) *lo_side[a] = 0.0;
      if (!is_unknown(spec.bc, n, hi)) *hi_side[a] = 0.0;
    } else {
      // Ghost elimination: u_ghost = u_inward + 2 h i k u_boundary.
      const cplx fold = cplx(0.0, 2.0 * kk / h);
      if (g[a] == 1) {
        c.ap -= fold;
        *lo_side[a] = 0.0;
        *hi_side[a] = -2.0 * inv_h2;
      } else if (g[a] == n[a]) {
        c.ap -= fold;
        *hi_side[a] = 0.0;
        *lo_side[a] = -2.0 * inv_h2;
      }
    }
  }
  return c;
}

namespace {

void check_shapes(const OperatorSpec& spec, const HaloField& u, const Grid3& grid) {
  if (!(u.extent() == spec.extent) || spec.extent.global != grid.n)
    throw Error(ErrorCode::ShapeMismatch, "operators",
                "field, operator block and grid do not describe the same layout");
  if (spec.k.size() != spec.extent.num_owned())
    throw Error(ErrorCode::ShapeMismatch, "operators", "wavenumber field does not match the block");
}

}  // namespace

void apply_operator(const OperatorSpec& spec, const HaloField& u, const Grid3& grid, HaloField& v) {
  check_shapes(spec, u, grid);
  if (!u.halo_current())
    throw Error(ErrorCode::StaleHalo, "operators",
                "input ghosts are stale; exchange halos before applying the operator");
  if (!v.same_shape(u)) v = HaloField(u.extent());

  const BlockExtent& e = spec.extent;
  const Index3& n = grid.n;
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  const double six_h2 = 6.0 * inv_h2;
  const cplx shift = spec.shift();
  // Rows whose stencil touches no boundary vertex use the plain 7-point form.
  const int margin = spec.bc == BoundaryKind::Dirichlet ? 2 : 1;
  const std::size_t sj = u.stride_j();
  const std::size_t sk = u.stride_k();
  const cplx* up = u.raw().data();
  cplx* vp = v.raw().data();

  for (int k = 1; k <= e.nz(); ++k) {
    const int gk = e.lo[2] + k - 1;
    const bool k_plain = gk > margin && gk < n[2] - margin + 1;
    for (int j = 1; j <= e.ny(); ++j) {
      const int gj = e.lo[1] + j - 1;
      const bool jk_plain = k_plain && gj > margin && gj < n[1] - margin + 1;
      const double* kp = spec.k.data() + static_cast<std::size_t>(e.nx()) *
                                             (static_cast<std::size_t>(j - 1) +
                                              static_cast<std::size_t>(e.ny()) *
                                                  static_cast<std::size_t>(k - 1));
      for (int i = 1; i <= e.nx(); ++i) {
        const int gi = e.lo[0] + i - 1;
        const std::size_t c = u.index(i, j, k);
        if (jk_plain && gi > margin && gi < n[0] - margin + 1) {
          const double kk = kp[i - 1];
          const cplx ap = six_h2 - shift * (kk * kk);
          vp[c] = ap * up[c] - inv_h2 * (up[c - 1] + up[c + 1] + up[c - sj] + up[c + sj] +
                                         up[c - sk] + up[c + sk]);
        } else {
          const StencilCoeffs s = stencil_at(spec, grid, {i, j, k});
          vp[c] = s.ap * up[c];
          if (s.aw != 0.0) vp[c] += s.aw * up[c - 1];
          if (s.ae != 0.0) vp[c] += s.ae * up[c + 1];
          if (s.as != 0.0) vp[c] += s.as * up[c - sj];
          if (s.an != 0.0) vp[c] += s.an * up[c + sj];
          if (s.ad != 0.0) vp[c] += s.ad * up[c - sk];
          if (s.au != 0.0) vp[c] += s.au * up[c + sk];
        }
      }
    }
  }
  v.invalidate_halo();
}

HaloField apply_operator(const OperatorSpec& spec, const HaloField& u, const Grid3& grid) {
  HaloField v(u.extent());
  apply_operator(spec, u, grid, v);
  return v;
}

OperatorSpec reduce_to_spec(const OperatorSpec& fine, const Grid3& coarse) {
  const BlockExtent ce = coarsen_extent(fine.extent, coarse);
  if (ce.empty())
    throw Error(ErrorCode::ShapeMismatch, "operators", "fine block has no coincident coarse vertex");
  OperatorSpec s = fine;
  s.extent = ce;
  s.k.clear();
  s.k.reserve(ce.num_owned());
  for (int k = ce.lo[2]; k <= ce.hi[2]; ++k)
    for (int j = ce.lo[1]; j <= ce.hi[1]; ++j)
      for (int i = ce.lo[0]; i <= ce.hi[0]; ++i) {
        const auto l = fine.extent.global_to_local({2 * i - 1, 2 * j - 1, 2 * k - 1});
        s.k.push_back(fine.k_at((*l)[0], (*l)[1], (*l)[2]));
      }
  return s;
}

Index3 snap_to_vertex(const Grid3& grid, const Point3& x) {
  Index3 idx{};
  bool off_vertex = false;
  for (int a = 0; a < 3; ++a) {
    const double t = (x[a] - grid.origin[a]) / grid.h;
    const double tol = 1e-9;
    if (t < -tol || t > grid.n[a] - 1 + tol) {
      std::ostringstream os;
      os << "source coordinate " << x[a] << " lies outside [" << grid.coord(a, 1) << ", "
         << grid.coord(a, grid.n[a]) << "] along axis " << a + 1;
      throw Error(ErrorCode::SourceOutsideDomain, "operators", os.str());
    }
    const double r = std::round(t);
    if (std::abs(t - r) > tol) off_vertex = true;
    idx[a] = static_cast<int>(r) + 1;
  }
  if (off_vertex) {
    std::ostringstream os;
    os << "source (" << x[0] << ", " << x[1] << ", " << x[2] << ") snapped to vertex (" << idx[0]
       << ", " << idx[1] << ", " << idx[2] << ")";
    log_warning(os.str());
  }
  return idx;
}

HaloField build_rhs(const SourceTerm& source, BoundaryKind bc, const Grid3& grid,
                    const BlockExtent& extent) {
  if (extent.global != grid.n)
    throw Error(ErrorCode::ShapeMismatch, "operators", "block does not belong to this grid");
  HaloField b(extent);
  const double h = grid.h;
  if (source.kind == SourceTerm::Kind::Dirac) {
    const Index3 g = snap_to_vertex(grid, source.location);
    if (!is_unknown(bc, grid.n, g))
      log_warning("Dirac source sits on an eliminated Dirichlet vertex and is dropped");
    else if (auto l = extent.global_to_local(g))
      b((*l)[0], (*l)[1], (*l)[2]) = 1.0 / (h * h * h);
  } else {
    for (int k = 1; k <= extent.nz(); ++k)
      for (int j = 1; j <= extent.ny(); ++j)
        for (int i = 1; i <= extent.nx(); ++i) {
          const Index3 g = extent.local_to_global({i, j, k});
          if (is_unknown(bc, grid.n, g)) b(i, j, k) = source.density(grid.point(g));
        }
  }
  if (bc == BoundaryKind::Dirichlet && source.boundary_value) {
    const double inv_h2 = 1.0 / (h * h);
    for (int k = 1; k <= extent.nz(); ++k)
      for (int j = 1; j <= extent.ny(); ++j)
        for (int i = 1; i <= extent.nx(); ++i) {
          const Index3 g = extent.local_to_global({i, j, k});
          if (!is_unknown(bc, grid.n, g)) continue;
          for (int a = 0; a < 3; ++a)
            for (int d : {-1, 1}) {
              Index3 nb = g;
              nb[a] += d;
              if (!is_unknown(bc, grid.n, nb))
                b(i, j, k) += source.boundary_value(grid.point(nb)) * inv_h2;
            }
        }
  }
  b.invalidate_halo();
  return b;
}

}  // namespace helm
