#pragma once

#include <functional>
#include <vector>

#include "helm/grid.hpp"

namespace helm {

enum class OperatorKind { Helmholtz, Cslp };
enum class BoundaryKind { Dirichlet, Sommerfeld };

const char* to_string(OperatorKind kind);
const char* to_string(BoundaryKind bc);

/// Multipliers of u at the centre and its x-, x+, y-, y+, z-, z+ neighbours.
struct StencilCoeffs {
  cplx ap, aw, ae, as, an, ad, au;
};

/// Discrete operator -Lap_h - (beta1 - i*beta2) k^2 on one block. Helmholtz
/// is the (1, 0) shift. `k` holds the wavenumber at every owned vertex of
/// `extent` (i1 fastest).
struct OperatorSpec {
  OperatorKind kind = OperatorKind::Helmholtz;
  double beta1 = 1.0;
  double beta2 = 0.0;
  BoundaryKind bc = BoundaryKind::Dirichlet;
  BlockExtent extent{};
  std::vector<double> k;

  cplx shift() const {
    return kind == OperatorKind::Helmholtz ? cplx(1.0, 0.0) : cplx(beta1, -beta2);
  }
  double k_at(int i, int j, int l) const {
    return k[static_cast<std::size_t>(i - 1) +
             static_cast<std::size_t>(extent.nx()) *
                 (static_cast<std::size_t>(j - 1) + static_cast<std::size_t>(extent.ny()) *
                                                        static_cast<std::size_t>(l - 1))];
  }

  /// Same medium and boundary, CSLP shift (beta1, beta2).
  OperatorSpec as_cslp(double b1, double b2) const;
};

/// Wavenumber sampled at every owned vertex of `extent`.
OperatorSpec make_spec(OperatorKind kind, BoundaryKind bc, const BlockExtent& extent,
                       std::vector<double> k, double beta1 = 1.0, double beta2 = 0.0);
OperatorSpec make_constant_spec(OperatorKind kind, BoundaryKind bc, const BlockExtent& extent,
                                double k, double beta1 = 1.0, double beta2 = 0.0);

/// Whether a global vertex carries an unknown: all vertices for Sommerfeld,
/// interior vertices only for Dirichlet (boundary values are eliminated).
bool is_unknown(BoundaryKind bc, const Index3& global_n, const Index3& g);

/// Row of the operator at an owned vertex (local index), after boundary
/// elimination. Eliminated Dirichlet rows are all zero.
StencilCoeffs stencil_at(const OperatorSpec& spec, const Grid3& grid, const Index3& local);

/// v = A u on the owned region. Needs current ghosts on every face that
/// borders another block; never communicates.
void apply_operator(const OperatorSpec& spec, const HaloField& u, const Grid3& grid, HaloField& v);
HaloField apply_operator(const OperatorSpec& spec, const HaloField& u, const Grid3& grid);

/// Rediscretization on the coarse grid: same shift and boundary, wavenumber
/// taken at the coincident fine vertex (2i-1). The coarse block is the one
/// induced by the fine block.
OperatorSpec reduce_to_spec(const OperatorSpec& fine, const Grid3& coarse);

/// Right-hand side description. A Dirac source puts 1/h^3 on the vertex at
/// `location`; a density is sampled at every unknown. `boundary_value` gives
/// the Dirichlet data folded into the right-hand side.
struct SourceTerm {
  enum class Kind { Dirac, Density };
  Kind kind = Kind::Dirac;
  Point3 location{};
  std::function<cplx(const Point3&)> density;
  std::function<cplx(const Point3&)> boundary_value;

  static SourceTerm dirac(Point3 at) {
    SourceTerm s;
    s.kind = Kind::Dirac;
    s.location = at;
    return s;
  }
};

/// Nearest vertex to a physical point; warns when the point is off-vertex.
Index3 snap_to_vertex(const Grid3& grid, const Point3& x);

HaloField build_rhs(const SourceTerm& source, BoundaryKind bc, const Grid3& grid,
                    const BlockExtent& extent);

}  // namespace helm
