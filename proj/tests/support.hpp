#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "helm/grid.hpp"
#include "helm/operators.hpp"
#include "helm/partition.hpp"

namespace helm::test {

/// splitmix64; small, seedable and identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  cplx complex() { return {uniform(-1.0, 1.0), uniform(-1.0, 1.0)}; }
  /// Odd count in [lo, hi].
  int odd(int lo, int hi) {
    int v = integer(lo, hi);
    return v % 2 ? v : (v + 1 <= hi ? v + 1 : v - 1);
  }

 private:
  std::uint64_t state_;
};

inline std::size_t gidx(const Index3& g, const Index3& n) {
  return static_cast<std::size_t>(g[0] - 1) +
         static_cast<std::size_t>(n[0]) *
             (static_cast<std::size_t>(g[1] - 1) + static_cast<std::size_t>(n[1]) * static_cast<std::size_t>(g[2] - 1));
}

template <class Fn>
void for_each_vertex(const Index3& n, Fn&& fn) {
  for (int k = 1; k <= n[2]; ++k)
    for (int j = 1; j <= n[1]; ++j)
      for (int i = 1; i <= n[0]; ++i) fn(Index3{i, j, k});
}

/// Random owned values; eliminated Dirichlet vertices stay zero.
inline HaloField random_field(const BlockExtent& e, BoundaryKind bc, Rng& rng) {
  HaloField f(e);
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) {
        const cplx v = rng.complex();
        if (is_unknown(bc, e.global, e.local_to_global({i, j, k}))) f(i, j, k) = v;
      }
  return f;
}

/// Field defined by a function of the global index.
inline HaloField field_from(const BlockExtent& e, const std::function<cplx(const Index3&)>& fn) {
  HaloField f(e);
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) f(i, j, k) = fn(e.local_to_global({i, j, k}));
  return f;
}

using Vec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<cplx>;

inline Vec to_vec(const HaloField& f) {
  const BlockExtent& e = f.extent();
  Vec v(static_cast<Eigen::Index>(e.num_owned()));
  Eigen::Index p = 0;
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) v(p++) = f(i, j, k);
  return v;
}

inline HaloField from_vec(const Vec& v, const BlockExtent& e) {
  HaloField f(e);
  Eigen::Index p = 0;
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) f(i, j, k) = v(p++);
  return f;
}

/// Assembled operator over every vertex of the grid, written from the
/// difference equations: 7-point Laplacian, Dirichlet vertices removed (zero
/// rows and columns), Sommerfeld ghosts eliminated with the centred one-sided
/// relation u_ghost = u_inward + 2 i k h u.
inline SpMat assemble_oracle(const Grid3& grid, BoundaryKind bc, cplx shift,
                             const std::function<double(const Index3&)>& kfun) {
  const Index3 n = grid.n;
  const double h2 = grid.h * grid.h;
  const auto N = static_cast<Eigen::Index>(grid.num_vertices());
  std::vector<Eigen::Triplet<cplx>> trip;
  for_each_vertex(n, [&](const Index3& g) {
    if (!is_unknown(bc, n, g)) return;
    const auto row = static_cast<Eigen::Index>(gidx(g, n));
    const double k = kfun(g);
    cplx diag = 6.0 / h2 - shift * k * k;
    for (int a = 0; a < 3; ++a)
      for (int s : {-1, 1}) {
        Index3 nb = g;
        nb[a] += s;
        if (nb[a] >= 1 && nb[a] <= n[a]) {
          if (is_unknown(bc, n, nb))
            trip.emplace_back(row, static_cast<Eigen::Index>(gidx(nb, n)), -1.0 / h2);
          continue;
        }
        // Ghost outside the domain (Sommerfeld only).
        Index3 in = g;
        in[a] -= s;
        trip.emplace_back(row, static_cast<Eigen::Index>(gidx(in, n)), -1.0 / h2);
        diag += -1.0 / h2 * cplx(0.0, 2.0 * k * grid.h);
      }
    trip.emplace_back(row, row, diag);
  });
  SpMat A(N, N);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Matrix of a linear map on whole-grid fields, one column per unit vector.
inline Eigen::MatrixXcd dense_of(const Grid3& grid, const std::function<HaloField(const HaloField&)>& op,
                                 const BlockExtent& in_extent, const BlockExtent& out_extent) {
  const auto nin = static_cast<Eigen::Index>(in_extent.num_owned());
  const auto nout = static_cast<Eigen::Index>(out_extent.num_owned());
  (void)grid;
  Eigen::MatrixXcd M(nout, nin);
  for (Eigen::Index c = 0; c < nin; ++c) {
    Vec e = Vec::Zero(nin);
    e(c) = 1.0;
    M.col(c) = to_vec(op(from_vec(e, in_extent)));
  }
  return M;
}

inline double max_abs_diff(const HaloField& a, const HaloField& b) {
  return (to_vec(a) - to_vec(b)).cwiseAbs().maxCoeff();
}

/// Runs `fn` on every rank of an in-process topology and returns the
/// gathered whole-grid field from rank 0.
inline HaloField distributed(const Grid3& grid, const Topology& topo,
                             const std::function<HaloField(Context&, const BlockExtent&)>& fn) {
  HaloField out;
  const auto extents = partition_grid(grid, topo);
  run_in_process(topo, [&](Context& ctx) {
    HaloField local = fn(ctx, extents[static_cast<std::size_t>(ctx.rank())]);
    HaloField g = gather_field(local, extents, *ctx.fabric);
    if (ctx.rank() == 0) out = std::move(g);
  });
  return out;
}

}  // namespace helm::test
