#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "helm/grid.hpp"
#include "helm/operators.hpp"
#include "helm/partition.hpp"

namespace helm {

// ------------------------------------------------------------ vector kernels
// All kernels act on owned regions only. Reductions are collective.

/// Global sum of conj(u) * v.
cplx dot(const HaloField& u, const HaloField& v, const Context& ctx);
double norm(const HaloField& u, const Context& ctx);
/// Several inner products conj(us[i]) * v with a single reduction.
std::vector<cplx> dot_many(std::span<const HaloField* const> us, const HaloField& v,
                           const Context& ctx);

/// y += a * x
void axpy(cplx a, const HaloField& x, HaloField& y);
/// y = x + b * y
void xpby(const HaloField& x, cplx b, HaloField& y);
void scale(cplx a, HaloField& x);
void copy_owned(const HaloField& src, HaloField& dst);
void set_zero(HaloField& x);

// ------------------------------------------------------------ solvers

/// y = Op(x). The callback may refresh the ghost planes of x.
using LinearOperator = std::function<void(HaloField& x, HaloField& y)>;

/// System operator: halo exchange followed by the matrix-free stencil.
LinearOperator stencil_operator(const OperatorSpec& spec, const Grid3& grid, const Context& ctx);

enum class KrylovMethod { Gmres, Bicgstab, Idrs };
enum class PrecondSide { Auto, Left, Right, None };

const char* to_string(KrylovMethod method);
const char* to_string(PrecondSide side);

struct SolverConfig {
  KrylovMethod method = KrylovMethod::Gmres;
  double tol = 1e-6;
  int maxit = 2000;
  PrecondSide side = PrecondSide::Auto;
  int s = 4;
  std::uint64_t rng_seed = 20210407;
  /// GMRES restart length; 0 keeps the full Krylov basis.
  int restart = 0;
  /// Receives "iter,relres" lines when set.
  std::ostream* residual_log = nullptr;
  bool warn_on_failure = true;

  bool operator==(const SolverConfig&) const = default;
};

/// Left for GMRES, right for Bi-CGSTAB and IDR(s) unless set explicitly.
PrecondSide resolved_side(const SolverConfig& cfg);

struct ConvergenceReport {
  std::string method;
  std::string side;
  int iterations = 0;
  /// Applications of the system operator only.
  int matvec_count = 0;
  int precond_count = 0;
  bool converged = false;
  /// "converged", "max-iterations" or "breakdown".
  std::string status;
  /// Entry 0 is the starting residual (1); one entry per iteration after.
  std::vector<double> residual_history;
  /// ||b - A x|| / ||b|| evaluated once after the solve.
  double true_residual = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, double> phase_times;
  double wall_time = 0.0;
};

struct SolveResult {
  HaloField x;
  ConvergenceReport report;
};

/// Solves A x = b from x0 = 0. `precond` approximates the inverse of A; an
/// empty callback means no preconditioning. Collective.
SolveResult solve(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                  const SolverConfig& cfg, const Context& ctx);

SolveResult gmres(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                  SolverConfig cfg, const Context& ctx);
SolveResult bicgstab(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                     SolverConfig cfg, const Context& ctx);
SolveResult idr_s(const LinearOperator& A, const LinearOperator& precond, const HaloField& b,
                  SolverConfig cfg, const Context& ctx);

/// Deterministic shadow vector entry for a global vertex, independent of the
/// partition.
cplx shadow_entry(std::uint64_t seed, int column, const Index3& global, const Index3& n);

}  // namespace helm
