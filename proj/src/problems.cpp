#include "helm/problems.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>

#include "helm/error.hpp"
#include "helm/log.hpp"

namespace helm {

namespace {

constexpr double kPi = std::numbers::pi;

std::string dims_string(const Index3& d) {
  std::ostringstream os;
  os << d[0] << 'x' << d[1] << 'x' << d[2];
  return os.str();
}

void check_velocity(float c, const std::filesystem::path& path) {
  if (!(c > 0.0f))
    throw Error(ErrorCode::NonPositiveVelocity, "problems",
                "velocity file " + path.string() + " contains a non-positive value");
}

void check_file_size(const std::filesystem::path& path, const Index3& dims) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::Io, "problems", "cannot stat " + path.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(dims[0]) *
                                  static_cast<std::uintmax_t>(dims[1]) *
                                  static_cast<std::uintmax_t>(dims[2]) * 4u;
  if (size != expected) {
    std::ostringstream os;
    os << path.string() << " holds " << size << " bytes; dims " << dims_string(dims) << " need "
       << expected;
    throw Error(ErrorCode::SizeMismatch, "problems", os.str());
  }
}

float decode_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void encode_f32(float v, unsigned char* p) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) p[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
}

}  // namespace

// ---------------------------------------------------------------- Media

MediumModel MediumModel::constant_k(double k) {
  MediumModel m;
  m.kind_ = Kind::ConstantK;
  m.k_ = k;
  return m;
}

MediumModel MediumModel::layered(WedgeLayers layers, double frequency, double x1_min,
                                 double x1_max, double x3_top) {
  for (double c : layers.velocity)
    if (!(c > 0.0))
      throw Error(ErrorCode::NonPositiveVelocity, "problems", "layer velocity must be positive");
  MediumModel m;
  m.kind_ = Kind::Layered;
  m.layers_ = layers;
  m.frequency_ = frequency;
  m.x1_min_ = x1_min;
  m.x1_max_ = x1_max;
  m.x3_top_ = x3_top;
  return m;
}

MediumModel MediumModel::velocity_grid(std::filesystem::path path, Index3 dims, double frequency,
                                       double spacing) {
  check_file_size(path, dims);
  MediumModel m;
  m.kind_ = Kind::VelocityGrid;
  m.path_ = std::move(path);
  m.dims_ = dims;
  m.frequency_ = frequency;
  m.spacing_ = spacing;
  return m;
}

double MediumModel::velocity_at(const Point3& x) const {
  if (kind_ != Kind::Layered)
    throw Error(ErrorCode::InvalidValue, "problems", "point velocity needs a layered model");
  const double t = (x[0] - x1_min_) / (x1_max_ - x1_min_);
  const double depth = x3_top_ - x[2];
  for (int l = 0; l < 2; ++l) {
    const double iface = layers_.depth_at_x1_min[static_cast<std::size_t>(l)] +
                         t * (layers_.depth_at_x1_max[static_cast<std::size_t>(l)] -
                              layers_.depth_at_x1_min[static_cast<std::size_t>(l)]);
    if (depth < iface) return layers_.velocity[static_cast<std::size_t>(l)];
  }
  return layers_.velocity[2];
}

std::vector<double> MediumModel::sample_k(const Grid3& grid, const BlockExtent& block) const {
  std::vector<double> k;
  k.reserve(block.num_owned());
  switch (kind_) {
    case Kind::ConstantK:
      k.assign(block.num_owned(), k_);
      break;
    case Kind::Layered:
      for (int i3 = block.lo[2]; i3 <= block.hi[2]; ++i3)
        for (int i2 = block.lo[1]; i2 <= block.hi[1]; ++i2)
          for (int i1 = block.lo[0]; i1 <= block.hi[0]; ++i1)
            k.push_back(wavenumber(frequency_, velocity_at(grid.point({i1, i2, i3}))));
      break;
    case Kind::VelocityGrid: {
      if (dims_ != grid.n)
        throw Error(ErrorCode::SizeMismatch, "problems",
                    "velocity grid " + dims_string(dims_) + " does not match the computational grid " +
                        dims_string(grid.n));
      if (spacing_ > 0.0 && std::abs(spacing_ - grid.h) > 1e-12 * grid.h)
        throw Error(ErrorCode::NonUniformSpacing, "problems",
                    "velocity grid spacing differs from the grid spacing");
      const std::vector<float> c = read_velocity_block(path_, dims_, block);
      bool outside_band = false;
      for (float v : c) {
        outside_band = outside_band || v < 1500.0f || v > 4482.0f;
        k.push_back(wavenumber(frequency_, static_cast<double>(v)));
      }
      if (outside_band) log_warning("velocities outside the 1500-4482 m/s band");
      break;
    }
  }
  return k;
}

// ---------------------------------------------------------------- Problems

const char* to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::ClosedOff: return "closed-off";
    case ProblemKind::Wedge: return "wedge";
    case ProblemKind::Salt: return "salt";
  }
  return "?";
}

ProblemSpec ProblemSpec::closed_off(int n, double k) {
  ProblemSpec s;
  s.kind = ProblemKind::ClosedOff;
  s.n = {n, n, n};
  s.k = k;
  return s;
}

ProblemSpec ProblemSpec::wedge(Index3 n, double frequency) {
  ProblemSpec s;
  s.kind = ProblemKind::Wedge;
  s.n = n;
  s.origin = {0.0, 0.0, -1000.0};
  s.lengths = {600.0, 600.0, 1000.0};
  s.frequency = frequency;
  s.source = {300.0, 300.0, 0.0};
  return s;
}

ProblemSpec ProblemSpec::salt(Index3 n, double frequency, std::filesystem::path velocity_file) {
  ProblemSpec s;
  s.kind = ProblemKind::Salt;
  s.n = n;
  s.origin = {0.0, 0.0, 0.0};
  s.lengths = {12800.0, 12800.0, 3840.0};
  s.frequency = frequency;
  s.velocity_file = std::move(velocity_file);
  s.source = {3200.0, 3200.0, 0.0};
  return s;
}

cplx closed_off_analytical(double x1, double x2, double x3) {
  return std::sin(kPi * x1) * std::sin(2.0 * kPi * x2) * std::sin(4.0 * kPi * x3) + 1.0;
}

cplx closed_off_source(double x1, double x2, double x3, double k) {
  return (21.0 * kPi * kPi - k * k) * std::sin(kPi * x1) * std::sin(2.0 * kPi * x2) *
             std::sin(4.0 * kPi * x3) -
         k * k;
}

Grid3 problem_grid(const ProblemSpec& spec) {
  for (int a = 0; a < 3; ++a)
    if (spec.n[a] < 3)
      throw Error(ErrorCode::DimensionTooSmall, "problems", "every direction needs >= 3 vertices");
  const double h = spec.lengths[0] / (spec.n[0] - 1);
  for (int a = 1; a < 3; ++a) {
    const double ha = spec.lengths[static_cast<std::size_t>(a)] / (spec.n[a] - 1);
    if (std::abs(ha - h) > 1e-12 * h) {
      std::ostringstream os;
      os << "spacing " << ha << " along axis " << a + 1 << " differs from " << h
         << " along axis 1 (grid " << dims_string(spec.n) << ")";
      throw Error(ErrorCode::NonUniformSpacing, "problems", os.str());
    }
  }
  return make_grid(spec.n[0], spec.n[1], spec.n[2], h, spec.origin);
}

namespace {

MediumModel medium_for(const ProblemSpec& spec, const Grid3& grid) {
  switch (spec.kind) {
    case ProblemKind::ClosedOff: return MediumModel::constant_k(spec.k);
    case ProblemKind::Wedge:
      return MediumModel::layered(spec.layers, spec.frequency, spec.origin[0],
                                  spec.origin[0] + spec.lengths[0],
                                  spec.origin[2] + spec.lengths[2]);
    case ProblemKind::Salt:
      return MediumModel::velocity_grid(spec.velocity_file, spec.n, spec.frequency, grid.h);
  }
  throw Error(ErrorCode::InvalidValue, "problems", "unknown problem kind");
}

}  // namespace

Problem build_problem(const ProblemSpec& spec, const BlockExtent& block) {
  Problem p;
  p.grid = problem_grid(spec);
  if (block.global != p.grid.n)
    throw Error(ErrorCode::ShapeMismatch, "problems", "block does not belong to the problem grid");
  const MediumModel medium = medium_for(spec, p.grid);
  std::vector<double> k = medium.sample_k(p.grid, block);
  for (double kv : k) p.kh_max = std::max(p.kh_max, kv * p.grid.h);
  if (p.kh_max > 0.625 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "kh = " << p.kh_max << " exceeds 0.625 (fewer than 10 points per wavelength)";
    log_warning(os.str());
  }
  p.op = make_spec(OperatorKind::Helmholtz, spec.bc(), block, std::move(k));

  SourceTerm src;
  if (spec.kind == ProblemKind::ClosedOff) {
    src.kind = SourceTerm::Kind::Density;
    const double kk = spec.k;
    src.density = [kk](const Point3& x) { return closed_off_source(x[0], x[1], x[2], kk); };
    src.boundary_value = [](const Point3&) { return cplx(1.0, 0.0); };
  } else {
    src = SourceTerm::dirac(spec.source);
  }
  p.rhs = build_rhs(src, spec.bc(), p.grid, block);
  return p;
}

Problem build_problem(const ProblemSpec& spec) {
  const Grid3 grid = problem_grid(spec);
  return build_problem(spec, BlockExtent::whole(grid));
}

ErrorNorms error_norms(const ProblemSpec& spec, const HaloField& u, const Grid3& grid,
                       const Context& ctx, HaloField* log10_error) {
  if (!spec.has_analytical())
    throw Error(ErrorCode::NoAnalyticalSolution, "problems",
                std::string("no analytical solution for the ") + to_string(spec.kind) + " problem");
  const BlockExtent& e = u.extent();
  if (e.global != grid.n)
    throw Error(ErrorCode::ShapeMismatch, "problems", "field does not belong to this grid");
  if (log10_error && !log10_error->same_shape(u)) *log10_error = HaloField(e);
  double max_abs = 0.0;
  double sum_sq = 0.0;
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) {
        const Index3 g = e.local_to_global({i, j, k});
        const Point3 x = grid.point(g);
        const bool unknown = is_unknown(spec.bc(), grid.n, g);
        const cplx value = unknown ? u(i, j, k) : cplx(1.0, 0.0);
        const double err = std::abs(value - closed_off_analytical(x[0], x[1], x[2]));
        if (log10_error) (*log10_error)(i, j, k) = std::log10(std::max(err, 1e-30));
        if (!unknown) continue;
        max_abs = std::max(max_abs, err);
        sum_sq += err * err;
      }
  ErrorNorms out;
  out.max_abs = ctx.fabric->allreduce_max(max_abs);
  const double total = ctx.fabric->allreduce_sum(cplx(sum_sq, 0.0)).real();
  out.l2 = std::sqrt(grid.h * grid.h * grid.h * total);
  return out;
}

void fill_dirichlet_boundary(const ProblemSpec& spec, const Grid3& grid, HaloField& u) {
  if (spec.bc() != BoundaryKind::Dirichlet) return;
  const BlockExtent& e = u.extent();
  for (int k = 1; k <= e.nz(); ++k)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i)
        if (!is_unknown(spec.bc(), grid.n, e.local_to_global({i, j, k}))) u(i, j, k) = 1.0;
  u.invalidate_halo();
}

// ---------------------------------------------------------------- Velocity files

VelocityVolume read_velocity_grid(const std::filesystem::path& path, const Index3& dims) {
  check_file_size(path, dims);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "problems", "cannot open " + path.string());
  VelocityVolume vol;
  vol.dims = dims;
  const std::size_t count = static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
                            static_cast<std::size_t>(dims[2]);
  std::vector<unsigned char> bytes(count * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorCode::SizeMismatch, "problems", "short read from " + path.string());
  vol.c.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    vol.c[i] = decode_f32(bytes.data() + 4 * i);
    check_velocity(vol.c[i], path);
  }
  return vol;
}

std::vector<float> read_velocity_block(const std::filesystem::path& path, const Index3& dims,
                                       const BlockExtent& block) {
  check_file_size(path, dims);
  if (block.global != dims)
    throw Error(ErrorCode::ShapeMismatch, "problems", "block does not belong to the velocity grid");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "problems", "cannot open " + path.string());
  std::vector<float> out;
  out.reserve(block.num_owned());
  std::vector<unsigned char> row(static_cast<std::size_t>(block.nx()) * 4);
  for (int k = block.lo[2]; k <= block.hi[2]; ++k)
    for (int j = block.lo[1]; j <= block.hi[1]; ++j) {
      const std::uint64_t first =
          static_cast<std::uint64_t>(block.lo[0] - 1) +
          static_cast<std::uint64_t>(dims[0]) *
              (static_cast<std::uint64_t>(j - 1) +
               static_cast<std::uint64_t>(dims[1]) * static_cast<std::uint64_t>(k - 1));
      in.seekg(static_cast<std::streamoff>(first * 4));
      in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
      if (!in) throw Error(ErrorCode::SizeMismatch, "problems", "short read from " + path.string());
      for (int i = 0; i < block.nx(); ++i) {
        const float c = decode_f32(row.data() + 4 * i);
        check_velocity(c, path);
        out.push_back(c);
      }
    }
  return out;
}

void write_velocity_grid(const std::filesystem::path& path, const Index3& dims,
                         std::span<const float> c) {
  const std::size_t count = static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
                            static_cast<std::size_t>(dims[2]);
  if (c.size() != count)
    throw Error(ErrorCode::SizeMismatch, "problems", "velocity array does not match dims");
  std::vector<unsigned char> bytes(count * 4);
  for (std::size_t i = 0; i < count; ++i) encode_f32(c[i], bytes.data() + 4 * i);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "problems", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "problems", "write failed for " + path.string());
}

std::vector<float> salt_surrogate(const Index3& dims) {
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 2) throw Error(ErrorCode::InvalidValue, "problems", "surrogate dims must be >= 2");
  std::vector<float> c;
  c.reserve(static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
            static_cast<std::size_t>(dims[2]));
  for (int k = 0; k < dims[2]; ++k) {
    const double z = static_cast<double>(k) / (dims[2] - 1);
    // Sediment layers stiffen with depth.
    const double background = 1500.0 + 1600.0 * z + 150.0 * std::floor(6.0 * z) / 6.0;
    for (int j = 0; j < dims[1]; ++j) {
      const double y = static_cast<double>(j) / (dims[1] - 1);
      for (int i = 0; i < dims[0]; ++i) {
        const double x = static_cast<double>(i) / (dims[0] - 1);
        const double dx = (x - 0.55) / 0.28;
        const double dy = (y - 0.5) / 0.22;
        const double dz = (z - 0.45) / 0.25;
        double v = dx * dx + dy * dy + dz * dz <= 1.0 ? 4482.0 : background;
        v = std::clamp(v, 1500.0, 4482.0);
        c.push_back(static_cast<float>(v));
      }
    }
  }
  return c;
}

}  // namespace helm
