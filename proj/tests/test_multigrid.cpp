#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/SparseLU>

#include "helm/error.hpp"
#include "helm/log.hpp"
#include "helm/multigrid.hpp"
#include "support.hpp"

using namespace helm;
using helm::test::Rng;

namespace {

double kfun(const Index3& v) { return 6.0 + 0.4 * v[0] - 0.2 * v[1] + 0.1 * v[2]; }

OperatorSpec cslp_spec(const Grid3& g, const BlockExtent& e, BoundaryKind bc) {
  std::vector<double> k;
  for (int l = 1; l <= e.nz(); ++l)
    for (int j = 1; j <= e.ny(); ++j)
      for (int i = 1; i <= e.nx(); ++i) k.push_back(kfun(e.local_to_global({i, j, l})));
  (void)g;
  return make_spec(OperatorKind::Cslp, bc, e, std::move(k), 1.0, -0.5);
}

std::vector<Eigen::Index> unknown_indices(const Index3& n, BoundaryKind bc) {
  std::vector<Eigen::Index> out;
  test::for_each_vertex(n, [&](const Index3& v) {
    if (is_unknown(bc, n, v)) out.push_back(static_cast<Eigen::Index>(test::gidx(v, n)));
  });
  return out;
}

}  // namespace

TEST_CASE("coarsening trace follows the threshold rule") {
  const auto sizes = [](const std::vector<Grid3>& t) {
    std::vector<int> out;
    for (const auto& g : t) out.push_back(g.n[0]);
    return out;
  };
  MultigridConfig cfg;
  CHECK(sizes(coarsening_trace(make_grid(65, 65, 65, 1.0), cfg)) == std::vector<int>{65, 33, 17, 9});
  cfg.threshold_inclusive = false;
  CHECK(sizes(coarsening_trace(make_grid(65, 65, 65, 1.0), cfg)) == std::vector<int>{65, 33, 17});
  cfg.threshold_inclusive = true;
  CHECK(coarsening_trace(make_grid(33, 33, 17, 1.0), cfg).back().n == Index3{17, 17, 9});
  CHECK(coarsening_trace(make_grid(64, 65, 65, 1.0), cfg).size() == 1u);
  cfg.coarsen_threshold = 5;
  CHECK(coarsening_trace(make_grid(9, 9, 9, 1.0), cfg).back().n == Index3{3, 3, 3});
}

TEST_CASE("restriction is one eighth of the prolongation transpose") {
  const Grid3 fine = make_grid(9, 9, 9, 0.125);
  const Grid3 coarse = coarsen(fine);
  const BlockExtent fe = BlockExtent::whole(fine), ce = BlockExtent::whole(coarse);
  for (BoundaryKind bc : {BoundaryKind::Dirichlet, BoundaryKind::Sommerfeld}) {
    const Eigen::MatrixXcd R = test::dense_of(
        fine, [&](const HaloField& r) { HaloField w = r; return restrict_fw(w, fine, coarse, bc); }, fe, ce);
    const Eigen::MatrixXcd P = test::dense_of(
        coarse, [&](const HaloField& e) { HaloField w = e; return prolong_tl(w, coarse, fine, fe, bc); }, ce, fe);
    const Eigen::MatrixXcd PT8 = P.transpose() / 8.0;
    // Rows whose full-weighting taps stay inside the domain; for Dirichlet
    // those are all unknown coarse vertices.
    double worst = 0.0;
    int rows = 0;
    test::for_each_vertex(coarse.n, [&](const Index3& c) {
      if (!is_unknown(bc, coarse.n, c)) return;
      bool inside = true;
      for (int a = 0; a < 3; ++a) inside = inside && c[a] > 1 && c[a] < coarse.n[a];
      if (!inside) return;
      const auto row = static_cast<Eigen::Index>(test::gidx(c, coarse.n));
      for (Eigen::Index col : unknown_indices(fine.n, bc))
        worst = std::max(worst, std::abs(R(row, col) - PT8(row, col)));
      ++rows;
    });
    CAPTURE(to_string(bc));
    CHECK(rows == 27);
    CHECK(worst <= 1e-14);
    // Restriction preserves constants, including renormalized boundary rows.
    if (bc == BoundaryKind::Sommerfeld) {
      const test::Vec ones = test::Vec::Ones(R.cols());
      CHECK(((R * ones).array() - 1.0).abs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("prolongation is exact for trilinear fields") {
  const Grid3 fine = make_grid(9, 7, 5, 0.5);
  const Grid3 coarse = coarsen(fine);
  const auto lin = [&](const Grid3& g, const Index3& v) {
    const Point3 p = g.point(v);
    return cplx(1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2], p[0] * p[1]);
  };
  HaloField c = test::field_from(BlockExtent::whole(coarse), [&](const Index3& v) { return lin(coarse, v); });
  const HaloField f = prolong_tl(c, coarse, fine, BlockExtent::whole(fine), BoundaryKind::Sommerfeld);
  double worst = 0.0;
  test::for_each_vertex(fine.n, [&](const Index3& v) {
    worst = std::max(worst, std::abs(f(v[0], v[1], v[2]) - lin(fine, v)));
  });
  CHECK(worst < 1e-12);
}

TEST_CASE("damped Jacobi matches the dense iteration") {
  Rng rng(4);
  const Grid3 g = make_grid(7, 7, 7, 1.0 / 6);
  const BlockExtent e = BlockExtent::whole(g);
  for (BoundaryKind bc : {BoundaryKind::Dirichlet, BoundaryKind::Sommerfeld}) {
    const OperatorSpec spec = cslp_spec(g, e, bc);
    const Eigen::MatrixXcd A = test::assemble_oracle(g, bc, spec.shift(), kfun);
    test::Vec dinv(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) dinv(i) = A(i, i) == cplx(0.0) ? cplx(0.0) : 1.0 / A(i, i);
    const HaloField b = test::random_field(e, bc, rng);
    HaloField u = test::random_field(e, bc, rng);
    test::Vec ref = test::to_vec(u);
    const test::Vec vb = test::to_vec(b);
    for (int s = 0; s < 3; ++s) ref += 0.8 * dinv.cwiseProduct(vb - A * ref);
    jacobi_smooth(spec, g, u, b, 0.8, 3);
    CHECK((test::to_vec(u) - ref).norm() / ref.norm() < 1e-13);

    HaloField z(e);
    jacobi_smooth(spec, g, z, b, 0.8, 1, serial_context(), true);
    const test::Vec first = 0.8 * dinv.cwiseProduct(vb);
    CHECK((test::to_vec(z) - first).norm() / first.norm() < 1e-14);
  }
}

TEST_CASE("two-level cycle matches the dense two-grid operator") {
  Rng rng(8);
  const Grid3 fine = make_grid(9, 9, 9, 0.125);
  const Grid3 coarse = coarsen(fine);
  const BlockExtent fe = BlockExtent::whole(fine), ce = BlockExtent::whole(coarse);
  for (BoundaryKind bc : {BoundaryKind::Dirichlet, BoundaryKind::Sommerfeld}) {
    MultigridConfig cfg;
    cfg.coarsen_threshold = 9;
    cfg.coarsest_tol = 1e-13;
    const OperatorSpec spec = cslp_spec(fine, fe, bc);
    MGHierarchy hier = build_hierarchy(fine, spec, cfg);
    REQUIRE(hier.levels.size() == 2u);

    const Eigen::MatrixXcd A = test::assemble_oracle(fine, bc, spec.shift(), kfun);
    const auto kc = [](const Index3& v) { return kfun({2 * v[0] - 1, 2 * v[1] - 1, 2 * v[2] - 1}); };
    const Eigen::MatrixXcd Ac = test::assemble_oracle(coarse, bc, spec.shift(), kc);
    const Eigen::MatrixXcd R = test::dense_of(
        fine, [&](const HaloField& r) { HaloField w = r; return restrict_fw(w, fine, coarse, bc); }, fe, ce);
    const Eigen::MatrixXcd P = test::dense_of(
        coarse, [&](const HaloField& e) { HaloField w = e; return prolong_tl(w, coarse, fine, fe, bc); }, ce, fe);
    test::Vec dinv(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) dinv(i) = A(i, i) == cplx(0.0) ? cplx(0.0) : 1.0 / A(i, i);

    // Coarse solve restricted to the unknowns (eliminated rows are empty).
    const auto cu = unknown_indices(coarse.n, bc);
    Eigen::MatrixXcd Acu(cu.size(), cu.size());
    for (std::size_t i = 0; i < cu.size(); ++i)
      for (std::size_t j = 0; j < cu.size(); ++j) Acu(i, j) = Ac(cu[i], cu[j]);
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Acu);

    const HaloField r = test::random_field(fe, bc, rng);
    const test::Vec vr = test::to_vec(r);
    test::Vec x = 0.8 * dinv.cwiseProduct(vr);
    const test::Vec rc = R * (vr - A * x);
    test::Vec rcu(cu.size());
    for (std::size_t i = 0; i < cu.size(); ++i) rcu(i) = rc(cu[i]);
    const test::Vec ecu = lu.solve(rcu);
    test::Vec ec = test::Vec::Zero(Ac.rows());
    for (std::size_t i = 0; i < cu.size(); ++i) ec(cu[i]) = ecu(i);
    x += P * ec;
    x += 0.8 * dinv.cwiseProduct(vr - A * x);

    const HaloField z = mg_precondition(hier, r);
    CAPTURE(to_string(bc));
    CHECK((test::to_vec(z) - x).norm() / x.norm() < 1e-10);
    CHECK(hier.coarsest.solves == 1);
    CHECK(hier.coarsest.all_converged);
  }
}

TEST_CASE("F-cycle on two levels is the V-cycle; on three it differs") {
  Rng rng(12);
  for (int n : {9, 17}) {
    const Grid3 g = make_grid(n, n, n, 1.0 / (n - 1));
    const BlockExtent e = BlockExtent::whole(g);
    const OperatorSpec spec = cslp_spec(g, e, BoundaryKind::Sommerfeld);
    MultigridConfig v;
    v.coarsen_threshold = 9;
    MultigridConfig f = v;
    f.cycle = CycleKind::F;
    MGHierarchy hv = build_hierarchy(g, spec, v), hf = build_hierarchy(g, spec, f);
    const HaloField r = test::random_field(e, BoundaryKind::Sommerfeld, rng);
    const double gap = test::max_abs_diff(mg_precondition(hv, r), mg_precondition(hf, r));
    if (n == 9)
      CHECK(gap < 1e-12);
    else
      CHECK(gap > 1e-8);
    if (n == 17) CHECK(hf.coarsest.solves == 2);
  }
}

TEST_CASE("property: the cycle is linear in the residual") {
  Rng rng(21);
  const Grid3 g = make_grid(17, 17, 17, 1.0 / 16);
  const BlockExtent e = BlockExtent::whole(g);
  for (BoundaryKind bc : {BoundaryKind::Dirichlet, BoundaryKind::Sommerfeld}) {
    MGHierarchy hier = build_hierarchy(g, cslp_spec(g, e, bc), MultigridConfig{});
    for (int trial = 0; trial < 3; ++trial) {
      const HaloField x = test::random_field(e, bc, rng), y = test::random_field(e, bc, rng);
      const cplx a = rng.complex(), b = rng.complex();
      HaloField z(e);
      for (int k = 1; k <= e.nz(); ++k)
        for (int j = 1; j <= e.ny(); ++j)
          for (int i = 1; i <= e.nx(); ++i) z(i, j, k) = a * x(i, j, k) + b * y(i, j, k);
      const test::Vec lhs = test::to_vec(mg_precondition(hier, z));
      const test::Vec rhs = a * test::to_vec(mg_precondition(hier, x)) + b * test::to_vec(mg_precondition(hier, y));
      CHECK((lhs - rhs).norm() / rhs.norm() < 1e-8);
    }
  }
}

TEST_CASE("the cycle is independent of the partition") {
  Rng rng(33);
  const Grid3 g = make_grid(17, 17, 17, 1.0 / 16);
  const BlockExtent whole = BlockExtent::whole(g);
  for (CycleKind kind : {CycleKind::V, CycleKind::F}) {
    MultigridConfig cfg;
    cfg.cycle = kind;
    const HaloField r = test::random_field(whole, BoundaryKind::Sommerfeld, rng);
    MGHierarchy serial = build_hierarchy(g, cslp_spec(g, whole, BoundaryKind::Sommerfeld), cfg);
    const HaloField ref = mg_precondition(serial, r);
    for (const Topology& t : {Topology(2, 1, 1), Topology(2, 2, 2), Topology(1, 3, 1)}) {
      const HaloField got = test::distributed(g, t, [&](Context& ctx, const BlockExtent& e) {
        MGHierarchy h = build_hierarchy(g, cslp_spec(g, e, BoundaryKind::Sommerfeld), cfg, ctx);
        return mg_precondition(h, extract_block(r, e));
      });
      CAPTURE(t.describe());
      CHECK((test::to_vec(got) - test::to_vec(ref)).norm() / test::to_vec(ref).norm() < 1e-9);
    }
  }
}

TEST_CASE("hierarchy checks") {
  const Grid3 g = make_grid(9, 9, 9, 0.125);
  const BlockExtent e = BlockExtent::whole(g);
  // k h = sqrt(6) puts a zero on the Helmholtz diagonal.
  const OperatorSpec zero = make_constant_spec(OperatorKind::Helmholtz, BoundaryKind::Dirichlet, e, std::sqrt(6.0) / 0.125);
  try {
    (void)inverse_diagonal(zero, g);
    FAIL("expected zero-diagonal");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ZeroDiagonal);
  }
  const BlockExtent part{{1, 1, 1}, {5, 9, 9}, {9, 9, 9}};
  CHECK_THROWS_AS(build_hierarchy(g, cslp_spec(g, part, BoundaryKind::Dirichlet), MultigridConfig{}), Error);

  set_log_level(LogLevel::Quiet);
  MultigridConfig one;
  one.coarsen_threshold = 33;
  MGHierarchy flat = build_hierarchy(g, cslp_spec(g, e, BoundaryKind::Dirichlet), one);
  set_log_level(LogLevel::Warning);
  CHECK(flat.levels.size() == 1u);
  Rng rng(2);
  const HaloField r = test::random_field(e, BoundaryKind::Dirichlet, rng);
  const HaloField z = mg_precondition(flat, r);
  const Context ctx = serial_context();
  HaloField az = z;
  halo_exchange(az, ctx);
  const HaloField res = apply_operator(flat.levels[0].spec, az, g);
  CHECK((test::to_vec(res) - test::to_vec(r)).norm() / test::to_vec(r).norm() < 1e-10);
}

TEST_CASE("timing phases stay exclusive inside the cycle") {
  const Grid3 g = make_grid(17, 17, 17, 1.0 / 16);
  const BlockExtent e = BlockExtent::whole(g);
  PhaseClock clock;
  const Context ctx = serial_context(&clock);
  MGHierarchy hier = build_hierarchy(g, cslp_spec(g, e, BoundaryKind::Sommerfeld), MultigridConfig{}, ctx);
  Rng rng(1);
  const auto start = std::chrono::steady_clock::now();
  (void)mg_precondition(hier, test::random_field(e, BoundaryKind::Sommerfeld, rng));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(clock.total() <= wall * (1.0 + 1e-9));
  for (const char* p : {phase::kSmoother, phase::kTransfer, phase::kCoarsest})
    CHECK(clock.seconds().count(p) == 1u);
}
