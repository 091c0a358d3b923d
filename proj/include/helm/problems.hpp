#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "helm/grid.hpp"
#include "helm/operators.hpp"
#include "helm/partition.hpp"

namespace helm {

/// Three constant-velocity layers separated by two planar interfaces that dip
/// along x1. Depths are measured downward from the top face.
struct WedgeLayers {
  std::array<double, 2> depth_at_x1_min{400.0, 600.0};
  std::array<double, 2> depth_at_x1_max{200.0, 800.0};
  /// Top, middle and bottom layer (m/s).
  std::array<double, 3> velocity{2000.0, 1500.0, 3000.0};

  bool operator==(const WedgeLayers&) const = default;
};

class MediumModel {
 public:
  enum class Kind { ConstantK, Layered, VelocityGrid };

  static MediumModel constant_k(double k);
  /// Velocity layers over the domain [x1_min, x1_max] with top face at x3_top.
  static MediumModel layered(WedgeLayers layers, double frequency, double x1_min, double x1_max,
                             double x3_top);
  /// Raw little-endian float32 velocities, i1 fastest, one per grid vertex.
  static MediumModel velocity_grid(std::filesystem::path path, Index3 dims, double frequency,
                                   double spacing = 0.0);

  Kind kind() const { return kind_; }
  double frequency() const { return frequency_; }

  /// Wavenumber at every owned vertex of `block`, i1 fastest. Velocity grids
  /// read only the rows the block covers.
  std::vector<double> sample_k(const Grid3& grid, const BlockExtent& block) const;

  /// Velocity at a physical point (layered models only).
  double velocity_at(const Point3& x) const;

 private:
  Kind kind_ = Kind::ConstantK;
  double k_ = 0.0;
  double frequency_ = 0.0;
  WedgeLayers layers_{};
  double x1_min_ = 0.0, x1_max_ = 1.0, x3_top_ = 0.0;
  std::filesystem::path path_;
  Index3 dims_{};
  double spacing_ = 0.0;
};

/// Wavenumber from frequency and velocity.
inline double wavenumber(double frequency, double velocity) {
  return 2.0 * 3.14159265358979323846 * frequency / velocity;
}

enum class ProblemKind { ClosedOff, Wedge, Salt };

const char* to_string(ProblemKind kind);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::ClosedOff;
  Index3 n{65, 65, 65};
  /// Lower corner and edge lengths of the box.
  Point3 origin{0.0, 0.0, 0.0};
  Point3 lengths{1.0, 1.0, 1.0};
  /// Closed-off wavenumber.
  double k = 40.0;
  /// Frequency for velocity-based media (Hz).
  double frequency = 10.0;
  WedgeLayers layers{};
  std::filesystem::path velocity_file;
  Point3 source{0.0, 0.0, 0.0};

  BoundaryKind bc() const {
    return kind == ProblemKind::ClosedOff ? BoundaryKind::Dirichlet : BoundaryKind::Sommerfeld;
  }
  bool has_analytical() const { return kind == ProblemKind::ClosedOff; }

  bool operator==(const ProblemSpec&) const = default;

  static ProblemSpec closed_off(int n, double k);
  /// [0,600] x [0,600] x [-1000,0] by default; source at (300, 300, 0).
  static ProblemSpec wedge(Index3 n, double frequency);
  /// (0,12800) x (0,12800) x (0,3840); source at (3200, 3200, 0).
  static ProblemSpec salt(Index3 n, double frequency, std::filesystem::path velocity_file);
};

/// sin(pi x1) sin(2 pi x2) sin(4 pi x3) + 1
cplx closed_off_analytical(double x1, double x2, double x3);
cplx closed_off_source(double x1, double x2, double x3, double k);

struct Problem {
  Grid3 grid;
  /// Helmholtz operator on this rank's block.
  OperatorSpec op;
  HaloField rhs;
  /// Largest k h over the block.
  double kh_max = 0.0;
};

/// Grid with uniform spacing implied by lengths and counts; throws
/// non-uniform-spacing when the directions disagree.
Grid3 problem_grid(const ProblemSpec& spec);

Problem build_problem(const ProblemSpec& spec, const BlockExtent& block);
Problem build_problem(const ProblemSpec& spec);

struct ErrorNorms {
  double max_abs = 0.0;
  /// sqrt(h^3 * sum |e|^2)
  double l2 = 0.0;
};

/// Pointwise error against the analytical solution over the unknowns.
/// `log10_error`, when given, receives log10|e| per owned vertex (floored
/// at -30; eliminated boundary vertices compare against the boundary data).
ErrorNorms error_norms(const ProblemSpec& spec, const HaloField& u, const Grid3& grid,
                       const Context& ctx = serial_context(), HaloField* log10_error = nullptr);

/// Writes the Dirichlet data into eliminated boundary vertices so the field
/// represents the full solution.
void fill_dirichlet_boundary(const ProblemSpec& spec, const Grid3& grid, HaloField& u);

struct VelocityVolume {
  Index3 dims{};
  std::vector<float> c;
};

VelocityVolume read_velocity_grid(const std::filesystem::path& path, const Index3& dims);
/// Velocities of one block, read row by row with seeks.
std::vector<float> read_velocity_block(const std::filesystem::path& path, const Index3& dims,
                                       const BlockExtent& block);
void write_velocity_grid(const std::filesystem::path& path, const Index3& dims,
                         std::span<const float> c);

/// Layered background with an ellipsoidal high-velocity body, clamped to
/// [1500, 4482] m/s. x3 is depth.
std::vector<float> salt_surrogate(const Index3& dims);

}  // namespace helm
