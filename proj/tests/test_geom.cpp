#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "vecchia/errors.hpp"
#include "vecchia/geom.hpp"
#include "vecchia/rng.hpp"

using namespace vecchia;

namespace {

LocationSet random_points(int n, int d, std::uint64_t seed) {
  CounterRng rng(seed);
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) pts(i, k) = rng.uniform();
  }
  return LocationSet(std::move(pts));
}

}  // namespace

TEST_CASE("grid_locations basic lattices") {
  LocationSet g1 = grid_locations(1, 3, 0.5);
  REQUIRE(g1.size() == 3);
  CHECK(g1.points()(0, 0) == 0.0);
  CHECK(g1.points()(1, 0) == 0.5);
  CHECK(g1.points()(2, 0) == 1.0);

  LocationSet g2 = grid_locations(2, 2, 1.0);
  REQUIRE(g2.size() == 4);
  Eigen::MatrixXd expect(4, 2);
  expect << 0, 0, 0, 1, 1, 0, 1, 1;
  CHECK((g2.points() - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grid_locations matches a nested-loop generator") {
  LocationSet g = grid_locations(2, 30, 1.0);
  REQUIRE(g.size() == 900);
  int row = 0;
  for (int a = 0; a < 30; ++a) {
    for (int b = 0; b < 30; ++b) {
      CHECK(g.points()(row, 0) == double(a));
      CHECK(g.points()(row, 1) == double(b));
      ++row;
    }
  }
}

TEST_CASE("grid_locations rejects oversized grids") {
  CHECK_THROWS_AS(grid_locations(2, 100000, 1.0), SizeError);
  CHECK_THROWS_AS(grid_locations(1, 0, 1.0), ArgumentError);
  CHECK_THROWS_AS(grid_locations(1, 3, 0.0), ArgumentError);
}

TEST_CASE("LocationSet rejects duplicates and non-finite coordinates") {
  Eigen::MatrixXd dup(2, 1);
  dup << 0.5, 0.5;
  CHECK_THROWS_AS(LocationSet{dup}, ArgumentError);
  Eigen::MatrixXd bad(1, 2);
  bad << 1.0, std::nan("");
  CHECK_THROWS_AS(LocationSet{bad}, ArgumentError);
}

TEST_CASE("coord_order sorts three scalars") {
  Eigen::MatrixXd pts(3, 1);
  pts << 0.3, 0.1, 0.2;
  Ordering o = coord_order(LocationSet(pts));
  CHECK(o.perm() == std::vector<int>{1, 2, 0});
}

TEST_CASE("coord_order of a sorted grid is the identity and idempotent") {
  LocationSet g = grid_locations(1, 9, 0.25);
  Ordering o = coord_order(g);
  for (int i = 0; i < 9; ++i) CHECK(o.at(i) == i);
}

TEST_CASE("coord_order equals a brute-force lexicographic sort") {
  LocationSet s = random_points(100, 2, 7);
  Ordering o = coord_order(s);
  std::vector<int> oracle(100);
  std::iota(oracle.begin(), oracle.end(), 0);
  std::sort(oracle.begin(), oracle.end(), [&](int a, int b) {
    if (s.points()(a, 0) != s.points()(b, 0)) return s.points()(a, 0) < s.points()(b, 0);
    if (s.points()(a, 1) != s.points()(b, 1)) return s.points()(a, 1) < s.points()(b, 1);
    return a < b;
  });
  CHECK(o.perm() == oracle);
}

TEST_CASE("orderings invert to the identity") {
  LocationSet s = random_points(64, 2, 3);
  for (const Ordering& o : {coord_order(s), maxmin_order(s)}) {
    const auto inv = o.inverse();
    for (int pos = 0; pos < o.size(); ++pos) CHECK(inv[o.at(pos)] == pos);
  }
}

TEST_CASE("maxmin_order of a single point is the identity") {
  Eigen::MatrixXd pts(1, 2);
  pts << 0.4, 0.4;
  Ordering o = maxmin_order(LocationSet(pts));
  CHECK(o.perm() == std::vector<int>{0});
}

TEST_CASE("maxmin_order on square corners plus center") {
  Eigen::MatrixXd pts(5, 2);
  pts << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5;
  LocationSet s(pts);
  Ordering o = maxmin_order(s);
  CHECK(o.at(0) == 4);  // center seeds the ordering
  std::vector<int> rest(o.perm().begin() + 1, o.perm().end());
  std::sort(rest.begin(), rest.end());
  CHECK(rest == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("maxmin greedy criterion holds at every step") {
  LocationSet s = random_points(50, 2, 11);
  Ordering o = maxmin_order(s);
  for (int step = 1; step < 50; ++step) {
    auto min_dist_to_prefix = [&](int pt) {
      double best = 1e300;
      for (int p = 0; p < step; ++p) best = std::min(best, s.distance(pt, o.at(p)));
      return best;
    };
    const double chosen = min_dist_to_prefix(o.at(step));
    for (int other = step + 1; other < 50; ++other) {
      CHECK(chosen >= min_dist_to_prefix(o.at(other)) - 1e-12);
    }
  }
}

TEST_CASE("block_partition trivial tilings") {
  LocationSet g = grid_locations(2, 2, 1.0);
  Grouping four = block_partition(g, Ordering::identity(4), 2);
  CHECK(four.block_count() == 4);
  for (int b = 0; b < 4; ++b) CHECK(four.block(b).size() == 1);

  Grouping one = block_partition(g, Ordering::identity(4), 1);
  CHECK(one.block_count() == 1);
  CHECK(one.block(0).size() == 4);
}

TEST_CASE("block_partition matches a point-in-rectangle oracle") {
  LocationSet g = grid_locations(2, 10, 1.0);
  Grouping blocks = block_partition(g, Ordering::identity(100), 2);
  REQUIRE(blocks.block_count() == 4);
  for (int b = 0; b < 4; ++b) CHECK(blocks.block(b).size() == 25);
  // oracle: tile membership by explicit rectangle comparison with the
  // boundary-to-lower rule on the [0,9]^2 bounding box (tile width 4.5)
  for (int b = 0; b < 4; ++b) {
    for (int i : blocks.block(b)) {
      const double x = g.points()(i, 0), y = g.points()(i, 1);
      const int tx = (x <= 4.5) ? 0 : 1;
      const int ty = (y <= 4.5) ? 0 : 1;
      CHECK(b == tx * 2 + ty);
    }
  }
}

TEST_CASE("block_partition is a partition") {
  LocationSet s = random_points(73, 2, 21);
  Grouping blocks = block_partition(s, Ordering::identity(73), 3);
  std::vector<int> seen(73, 0);
  for (int b = 0; b < blocks.block_count(); ++b) {
    CHECK(!blocks.block(b).empty());
    for (int i : blocks.block(b)) seen[i] += 1;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("nearest_previous basics") {
  LocationSet g = grid_locations(1, 8, 1.0);
  Ordering o = coord_order(g);
  CHECK(nearest_previous(g, o, 0, 5).empty());
  CHECK(nearest_previous(g, o, 4, 2) == std::vector<int>{2, 3});
}

TEST_CASE("nearest_previous matches the full distance-sort oracle") {
  LocationSet s = random_points(60, 2, 31);
  Ordering o = maxmin_order(s);
  Eigen::MatrixXd ordered(60, 2);
  for (int k = 0; k < 60; ++k) ordered.row(k) = s.points().row(o.at(k));
  for (int pos = 0; pos < 60; ++pos) {
    const auto got = nearest_previous(s, o, pos, 8);
    CHECK(static_cast<int>(got.size()) == std::min(8, pos));
    std::vector<std::pair<double, int>> oracle;
    for (int j = 0; j < pos; ++j) {
      oracle.emplace_back((ordered.row(j) - ordered.row(pos)).norm(), j);
    }
    std::sort(oracle.begin(), oracle.end());
    std::vector<int> expect;
    for (int k = 0; k < std::min(8, pos); ++k) expect.push_back(oracle[k].second);
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
    for (int j : got) CHECK(j < pos);
  }
}
