#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "helm/error.hpp"
#include "helm/log.hpp"
#include "helm/problems.hpp"
#include "support.hpp"

using namespace helm;
using helm::test::Rng;

namespace {

constexpr double kPi = std::numbers::pi;

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / (std::to_string(::getpid()) + "_" + name);
}

HaloField analytical_field(const Grid3& g, const BlockExtent& e) {
  return test::field_from(e, [&](const Index3& v) {
    const Point3 x = g.point(v);
    return closed_off_analytical(x[0], x[1], x[2]);
  });
}

// Max-norm of A u_exact - b over the unknowns, with Dirichlet data lifted.
double truncation_error(int n, double k) {
  const ProblemSpec spec = ProblemSpec::closed_off(n, k);
  const Problem p = build_problem(spec);
  HaloField u = analytical_field(p.grid, BlockExtent::whole(p.grid));
  for (int kk = 1; kk <= n; ++kk)
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i)
        if (!is_unknown(BoundaryKind::Dirichlet, p.grid.n, {i, j, kk})) u(i, j, kk) = 0.0;
  u.mark_halo_valid();
  const HaloField au = apply_operator(p.op, u, p.grid);
  return (test::to_vec(au) - test::to_vec(p.rhs)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("closed-off source is the continuous residual of the analytical solution") {
  Rng rng(1);
  const double k = 17.0;
  const double d = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    const double x = rng.uniform(0.1, 0.9), y = rng.uniform(0.1, 0.9), z = rng.uniform(0.1, 0.9);
    const auto u = [](double a, double b, double c) { return closed_off_analytical(a, b, c); };
    const auto lap_h = [&](double s) {
      return (u(x + s, y, z) + u(x - s, y, z) + u(x, y + s, z) + u(x, y - s, z) + u(x, y, z + s) +
              u(x, y, z - s) - 6.0 * u(x, y, z)) /
             (s * s);
    };
    // Richardson step removes the O(s^2) term.
    const cplx lap = (4.0 * lap_h(d) - lap_h(2.0 * d)) / 3.0;
    CHECK(std::abs(-lap - k * k * u(x, y, z) - closed_off_source(x, y, z, k)) < 1e-4);
  }
  CHECK(closed_off_analytical(0.0, 0.3, 0.7) == cplx(1.0, 0.0));
}

TEST_CASE("discrete truncation error is second order") {
  const double e17 = truncation_error(17, 10.0);
  const double e33 = truncation_error(33, 10.0);
  const double e65 = truncation_error(65, 10.0);
  CHECK(e17 / e33 >= 3.0);
  CHECK(e17 / e33 <= 5.0);
  CHECK(e33 / e65 >= 3.0);
  CHECK(e33 / e65 <= 5.0);
}

TEST_CASE("wavenumber from frequency and velocity") {
  CHECK(wavenumber(10.0, 2000.0) == doctest::Approx(2.0 * kPi * 10.0 / 2000.0));
  CHECK(wavenumber(5.0, 1500.0) == doctest::Approx(0.0209439510239));
}

TEST_CASE("layered model assigns velocities by dipping interfaces") {
  const MediumModel m = MediumModel::layered(WedgeLayers{}, 10.0, 0.0, 600.0, 0.0);
  CHECK(m.velocity_at({0.0, 0.0, -300.0}) == 2000.0);
  CHECK(m.velocity_at({0.0, 0.0, -500.0}) == 1500.0);
  CHECK(m.velocity_at({0.0, 0.0, -700.0}) == 3000.0);
  CHECK(m.velocity_at({600.0, 0.0, -300.0}) == 1500.0);
  CHECK(m.velocity_at({600.0, 0.0, -150.0}) == 2000.0);
  CHECK(m.velocity_at({600.0, 0.0, -900.0}) == 3000.0);
  // Halfway along x1 the first interface sits at 300 m depth.
  CHECK(m.velocity_at({300.0, 100.0, -299.0}) == 2000.0);
  CHECK(m.velocity_at({300.0, 100.0, -301.0}) == 1500.0);
  WedgeLayers bad;
  bad.velocity[1] = 0.0;
  CHECK_THROWS_AS(MediumModel::layered(bad, 10.0, 0.0, 600.0, 0.0), Error);
}

TEST_CASE("problem grids need uniform spacing") {
  CHECK(problem_grid(ProblemSpec::wedge({73, 73, 121}, 10.0)).h == doctest::Approx(600.0 / 72));
  try {
    (void)problem_grid(ProblemSpec::wedge({193, 321, 193}, 10.0));
    FAIL("expected non-uniform spacing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonUniformSpacing);
  }
  const Grid3 salt = problem_grid(ProblemSpec::salt({641, 641, 193}, 5.0, "unused"));
  CHECK(salt.h == doctest::Approx(20.0));
  CHECK(salt.num_vertices() == 641u * 641u * 193u);
}

TEST_CASE("wedge problem: Dirac source and k field") {
  ProblemSpec spec = ProblemSpec::wedge({25, 25, 41}, 10.0);
  const Problem p = build_problem(spec);
  CHECK(p.op.bc == BoundaryKind::Sommerfeld);
  cplx total = 0.0;
  for (const cplx& v : p.rhs.owned_values()) total += v;
  CHECK(std::abs(total * std::pow(p.grid.h, 3) - 1.0) < 1e-15);
  CHECK(p.kh_max == doctest::Approx(wavenumber(10.0, 1500.0) * 25.0));
  // Top row at x1 = 0 is in the 2000 m/s layer.
  CHECK(p.op.k_at(1, 1, 41) == doctest::Approx(wavenumber(10.0, 2000.0)));
  CHECK(p.op.k_at(1, 1, 1) == doctest::Approx(wavenumber(10.0, 3000.0)));
}

TEST_CASE("blockwise problem assembly matches the whole-grid assembly") {
  const ProblemSpec spec = ProblemSpec::wedge({13, 13, 21}, 10.0);
  const Problem whole = build_problem(spec);
  for (const auto& e : partition_grid(whole.grid, Topology(2, 3, 2))) {
    const Problem part = build_problem(spec, e);
    const HaloField ref = extract_block(whole.rhs, e);
    CHECK(part.rhs.owned_values() == ref.owned_values());
    for (int k = 1; k <= e.nz(); ++k)
      for (int j = 1; j <= e.ny(); ++j)
        for (int i = 1; i <= e.nx(); ++i) {
          const Index3 g = e.local_to_global({i, j, k});
          CHECK(part.op.k_at(i, j, k) == whole.op.k_at(g[0], g[1], g[2]));
        }
  }
}

TEST_CASE("velocity files round-trip and read by block") {
  Rng rng(3);
  const Index3 dims{7, 5, 4};
  std::vector<float> c(140);
  for (auto& v : c) v = static_cast<float>(rng.uniform(1500.0, 4482.0));
  const auto path = temp_file("vel.bin");
  write_velocity_grid(path, dims, c);
  CHECK(std::filesystem::file_size(path) == 140u * 4u);
  CHECK(read_velocity_grid(path, dims).c == c);
  const BlockExtent block{{2, 3, 2}, {5, 5, 3}, dims};
  const auto part = read_velocity_block(path, dims, block);
  REQUIRE(part.size() == block.num_owned());
  std::size_t p = 0;
  for (int k = 2; k <= 3; ++k)
    for (int j = 3; j <= 5; ++j)
      for (int i = 2; i <= 5; ++i) CHECK(part[p++] == c[test::gidx({i, j, k}, dims)]);
  try {
    (void)MediumModel::velocity_grid(path, {7, 5, 5}, 5.0);
    FAIL("expected a size mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SizeMismatch);
  }
  c[17] = -1.0f;
  write_velocity_grid(path, dims, c);
  CHECK_THROWS_AS(read_velocity_grid(path, dims), Error);
  std::filesystem::remove(path);
}

TEST_CASE("salt problem reads the surrogate velocity grid") {
  const Index3 dims{33, 33, 11};
  const auto c = salt_surrogate(dims);
  const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
  CHECK(*lo >= 1500.0f);
  CHECK(*hi == 4482.0f);
  const auto path = temp_file("salt.bin");
  write_velocity_grid(path, dims, c);
  ProblemSpec spec = ProblemSpec::salt(dims, 5.0, path);
  spec.lengths = {12800.0, 12800.0, 4000.0};
  const Problem p = build_problem(spec);
  CHECK(p.op.k.size() == 33u * 33u * 11u);
  CHECK(p.op.k_at(1, 1, 1) == doctest::Approx(wavenumber(5.0, c[0])));
  cplx total = 0.0;
  for (const cplx& v : p.rhs.owned_values()) total += v;
  CHECK(std::abs(total * std::pow(p.grid.h, 3) - 1.0) < 1e-12);
  spec.n = {33, 33, 21};
  spec.lengths = {12800.0, 12800.0, 8000.0};
  CHECK_THROWS_AS(build_problem(spec), Error);
  std::filesystem::remove(path);
}

TEST_CASE("error norms of the analytical solution vanish") {
  const ProblemSpec spec = ProblemSpec::closed_off(9, 5.0);
  const Grid3 g = problem_grid(spec);
  const BlockExtent e = BlockExtent::whole(g);
  HaloField u = analytical_field(g, e);
  HaloField log10;
  const ErrorNorms n0 = error_norms(spec, u, g, serial_context(), &log10);
  CHECK(n0.max_abs < 1e-15);
  CHECK(log10(1, 1, 1).real() == -30.0);
  u(4, 5, 6) += 1e-3;
  u(1, 1, 1) += 5.0;  // eliminated vertex: ignored
  const ErrorNorms n1 = error_norms(spec, u, g, serial_context(), &log10);
  CHECK(n1.max_abs == doctest::Approx(1e-3));
  CHECK(n1.l2 == doctest::Approx(1e-3 * std::pow(g.h, 1.5)));
  CHECK(log10(4, 5, 6).real() == doctest::Approx(-3.0));
  CHECK_THROWS_AS(error_norms(ProblemSpec::wedge({13, 13, 21}, 10.0), u, g), Error);
}

TEST_CASE("distributed error norms equal the serial ones") {
  Rng rng(6);
  const ProblemSpec spec = ProblemSpec::closed_off(11, 5.0);
  const Grid3 g = problem_grid(spec);
  HaloField u = analytical_field(g, BlockExtent::whole(g));
  for (auto& v : u.raw()) v += 1e-4 * rng.complex();
  const ErrorNorms ref = error_norms(spec, u, g);
  ErrorNorms got;
  const auto blocks = partition_grid(g, Topology(2, 2, 1));
  run_in_process(Topology(2, 2, 1), [&](Context& ctx) {
    const ErrorNorms n = error_norms(spec, extract_block(u, blocks[static_cast<std::size_t>(ctx.rank())]), g, ctx);
    if (ctx.rank() == 0) got = n;
  });
  CHECK(got.max_abs == ref.max_abs);
  CHECK(got.l2 == doctest::Approx(ref.l2).epsilon(1e-14));
}

TEST_CASE("Dirichlet fill writes the boundary data") {
  const ProblemSpec spec = ProblemSpec::closed_off(5, 1.0);
  const Grid3 g = problem_grid(spec);
  HaloField u(BlockExtent::whole(g));
  fill_dirichlet_boundary(spec, g, u);
  CHECK(u(1, 3, 3) == cplx(1.0));
  CHECK(u(3, 3, 3) == cplx(0.0));
}
