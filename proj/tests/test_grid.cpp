#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "helm/error.hpp"
#include "helm/grid.hpp"
#include "support.hpp"

using namespace helm;
using helm::test::Rng;

TEST_CASE("make_grid rejects degenerate sizes") {
  CHECK_THROWS_AS(make_grid(2, 5, 5, 0.1), Error);
  CHECK_THROWS_AS(make_grid(5, 5, 5, 0.0), Error);
  try {
    make_grid(5, 1, 5, 0.1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionTooSmall);
    CHECK(e.module() == "grid");
  }
}

TEST_CASE("coarsening halves counts and doubles spacing") {
  const Grid3 g = make_grid(65, 33, 17, 1.0 / 64, {0.5, -1.0, 2.0});
  const Grid3 c = coarsen(g);
  CHECK(c.n == Index3{33, 17, 9});
  CHECK(c.h == doctest::Approx(1.0 / 32));
  CHECK(c.origin == g.origin);
  CHECK(c.level == 1);
  // Coarse vertex i coincides with fine vertex 2i-1.
  for (int i = 1; i <= c.n[0]; ++i) CHECK(c.coord(0, i) == doctest::Approx(g.coord(0, 2 * i - 1)));
  CHECK(c.fine_index(5) == 9);
  CHECK(coarsen(c).fine_index(3) == 9);
}

TEST_CASE("coarsening requires odd counts and keeps three vertices") {
  CHECK_FALSE(make_grid(64, 65, 65, 0.1).coarsenable());
  CHECK_FALSE(make_grid(3, 5, 5, 0.1).coarsenable());
  CHECK(make_grid(5, 5, 5, 0.1).coarsenable());
  try {
    coarsen(make_grid(64, 65, 65, 0.1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotCoarsenable);
  }
}

TEST_CASE("block extent index conversions") {
  const BlockExtent e{{3, 1, 5}, {6, 4, 9}, {9, 9, 9}};
  CHECK(e.nx() == 4);
  CHECK(e.num_owned() == 4u * 4u * 5u);
  CHECK(e.on_physical_boundary(Face::YLow));
  CHECK_FALSE(e.on_physical_boundary(Face::XLow));
  CHECK(e.on_physical_boundary(Face::ZHigh));
  CHECK(e.global_to_local({3, 1, 5}) == Index3{1, 1, 1});
  CHECK_FALSE(e.global_to_local({7, 1, 5}).has_value());
  CHECK(e.local_to_global({4, 4, 5}) == Index3{6, 4, 9});
}

TEST_CASE("halo field layout is i1 fastest with one ghost plane") {
  const BlockExtent e{{1, 1, 1}, {4, 3, 2}, {4, 3, 2}};
  HaloField f(e);
  CHECK(f.raw().size() == 6u * 5u * 4u);
  CHECK(f.index(1, 0, 0) - f.index(0, 0, 0) == 1u);
  CHECK(f.stride_j() == 6u);
  CHECK(f.stride_k() == 30u);
  f(2, 3, 1) = cplx(1.0, 2.0);
  CHECK(f.raw()[f.index(2, 3, 1)] == cplx(1.0, 2.0));
  const auto owned = f.owned_values();
  REQUIRE(owned.size() == e.num_owned());
  CHECK(owned[1 + 4 * 2] == cplx(1.0, 2.0));
}

TEST_CASE("halo validity tracks interior faces only") {
  const BlockExtent e{{1, 1, 1}, {4, 9, 9}, {9, 9, 9}};
  HaloField f(e);
  // A fresh zero field agrees with its (zero) neighbours.
  CHECK(f.halo_current());
  f.invalidate_halo();
  CHECK(f.halo_valid(Face::XLow));
  CHECK_FALSE(f.halo_valid(Face::XHigh));
  CHECK_FALSE(f.halo_current());
  f.mark_halo_valid();
  CHECK(f.halo_current());
  f.invalidate_halo();
  CHECK_FALSE(f.halo_valid(Face::XHigh));
}

TEST_CASE("owned values round-trip and size checks") {
  Rng rng(7);
  const BlockExtent e{{2, 2, 2}, {5, 6, 4}, {9, 9, 9}};
  HaloField f(e);
  std::vector<cplx> values(e.num_owned());
  for (auto& v : values) v = rng.complex();
  f.set_owned_values(values);
  CHECK(f.owned_values() == values);
  values.pop_back();
  CHECK_THROWS_AS(f.set_owned_values(values), Error);
}

TEST_CASE("field file round-trip is bit exact") {
  Rng rng(11);
  const Grid3 g = make_grid(5, 7, 9, 0.25);
  HaloField f(BlockExtent::whole(g));
  std::vector<cplx> values(g.num_vertices());
  for (auto& v : values) v = rng.complex() * 1e-7;
  f.set_owned_values(values);
  const auto path = std::filesystem::temp_directory_path() / "helm_grid_roundtrip.hff";
  write_field_file(path, f);
  const HaloField back = read_field_file(path);
  CHECK(back.extent().global == g.n);
  CHECK(back.owned_values() == values);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  CHECK_THROWS_AS(read_field_file(path), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_field_file(path), Error);
}

TEST_CASE("property: coarsen commutes with coordinates on random odd grids") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Grid3 g = make_grid(rng.odd(5, 65), rng.odd(5, 65), rng.odd(5, 65), rng.uniform(0.01, 2.0),
                              {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
    const Grid3 c = coarsen(g);
    for (int a = 0; a < 3; ++a) {
      CHECK(2 * c.n[a] - 1 == g.n[a]);
      CHECK(c.coord(a, c.n[a]) == doctest::Approx(g.coord(a, g.n[a])));
    }
  }
}
