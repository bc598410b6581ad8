#include <cmath>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "vecchia/errors.hpp"
#include "vecchia/rng.hpp"
#include "vecchia/sparse.hpp"

using namespace vecchia;

namespace {

// random sparse SPD matrix: banded-ish random pattern plus diagonal dominance
SparseSym random_spd(int n, double density, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<std::tuple<int, int, double>> t;
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < c; ++r) {
      if (rng.uniform() < density) {
        const double v = rng.normal();
        t.emplace_back(r, c, v);
        dense(r, c) = dense(c, r) = v;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    const double d = dense.cwiseAbs().row(i).sum() + 1.0 + rng.uniform();
    t.emplace_back(i, i, d);
  }
  return sym_from_triplets(n, std::move(t));
}

}  // namespace

TEST_CASE("rchol of diagonal matrices") {
  SparseSym a = sym_from_triplets(2, {{0, 0, 4.0}, {1, 1, 9.0}});
  SparseUpper r = rchol(a);
  CHECK(r.nnz() == 2);
  CHECK(r.diag(0) == doctest::Approx(2.0));
  CHECK(r.diag(1) == doctest::Approx(3.0));

  Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(5, 5);
  CHECK((rchol(identity) - identity).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("dense rchol reconstructs random SPD matrices") {
  CounterRng rng(5);
  Eigen::MatrixXd m(8, 8);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) m(i, j) = rng.normal();
  }
  Eigen::MatrixXd a = m * m.transpose() + Eigen::MatrixXd::Identity(8, 8);
  Eigen::MatrixXd r = rchol(a);
  CHECK(((r * r.transpose()) - a).norm() / a.norm() < 1e-12);
  for (int i = 0; i < 8; ++i) {
    CHECK(r(i, i) > 0.0);
    for (int j = 0; j < i; ++j) CHECK(r(i, j) == 0.0);
  }
}

TEST_CASE("dense rchol equals the reverse-permuted factorization entrywise") {
  CounterRng rng(9);
  Eigen::MatrixXd m(6, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) m(i, j) = rng.normal();
  }
  Eigen::MatrixXd a = m * m.transpose() + 2.0 * Eigen::MatrixXd::Identity(6, 6);
  Eigen::MatrixXd rev = a.colwise().reverse().rowwise().reverse();
  Eigen::MatrixXd expect =
      Eigen::MatrixXd(dense_chol(rev)).colwise().reverse().rowwise().reverse();
  CHECK((rchol(a) - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sparse and dense rchol agree") {
  for (int n : {5, 23, 60, 200}) {
    SparseSym a = random_spd(n, 0.15, 100 + n);
    SparseUpper r = rchol(a);
    Eigen::MatrixXd rd = rchol(a.dense());
    CHECK((r.dense() - rd).cwiseAbs().maxCoeff() < 1e-12 * rd.cwiseAbs().maxCoeff());
    // reconstruction
    Eigen::MatrixXd rr = r.dense() * r.dense().transpose();
    CHECK((rr - a.dense()).norm() / a.dense().norm() < 1e-12);
  }
}

TEST_CASE("rchol reports the failing pivot") {
  SparseSym bad = sym_from_triplets(3, {{0, 0, 1.0}, {1, 1, -1.0}, {2, 2, 1.0}});
  CHECK_THROWS_AS(rchol(bad), NotPositiveDefiniteError);
  try {
    rchol(bad);
  } catch (const NotPositiveDefiniteError& e) {
    CHECK(e.pivot() == 1);
  }
  Eigen::MatrixXd bad_dense(2, 2);
  bad_dense << 1, 0, 0, -1;
  CHECK_THROWS_AS(rchol(bad_dense), NotPositiveDefiniteError);
}

TEST_CASE("sparse_outer of a single column is rank one") {
  SparseMatrix m = csc_from_triplets(3, 1, {{0, 0, 2.0}, {2, 0, -1.0}});
  SparseSym w = sparse_outer(m);
  Eigen::MatrixXd wd = w.dense();
  Eigen::MatrixXd expect(3, 3);
  expect << 4, 0, -2, 0, 0, 0, -2, 0, 1;
  CHECK((wd - expect).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("sparse_outer equals the dense product") {
  CounterRng rng(17);
  std::vector<std::tuple<int, int, double>> t;
  for (int c = 0; c < 40; ++c) {
    for (int r = 0; r < 12; ++r) {
      if (rng.uniform() < 0.3) t.emplace_back(r, c, rng.normal());
    }
  }
  SparseMatrix m = csc_from_triplets(12, 40, std::move(t));
  SparseSym w = sparse_outer(m);
  Eigen::MatrixXd expect = m.dense() * m.dense().transpose();
  CHECK((w.dense() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tri_solve basics") {
  SparseUpper eye = upper_from_triplets(3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  Eigen::VectorXd b(3);
  b << 1, 2, 3;
  CHECK((tri_solve(eye, b, TriSide::upper) - b).norm() == 0.0);

  SparseUpper diag = upper_from_triplets(2, {{0, 0, 2.0}, {1, 1, 4.0}});
  Eigen::VectorXd b2(2);
  b2 << 2, 8;
  Eigen::VectorXd x = tri_solve(diag, b2, TriSide::upper);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(2.0));
}

TEST_CASE("tri_solve residuals and transposed solves on random factors") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SparseSym a = random_spd(40, 0.2, seed);
    SparseUpper r = rchol(a);
    CounterRng rng(seed + 50);
    Eigen::VectorXd b = rng.normals(40);
    Eigen::MatrixXd rd = r.dense();

    Eigen::VectorXd x = tri_solve(r, b, TriSide::upper);
    CHECK((rd * x - b).lpNorm<Eigen::Infinity>() < 1e-12 * b.lpNorm<Eigen::Infinity>());
    Eigen::VectorXd xt = tri_solve(r, b, TriSide::transposed);
    CHECK((rd.transpose() * xt - b).lpNorm<Eigen::Infinity>() <
          1e-12 * b.lpNorm<Eigen::Infinity>());

    // recovery: solving against R x0 gives back x0
    Eigen::VectorXd x0 = rng.normals(40);
    Eigen::VectorXd rhs = rd * x0;
    CHECK((tri_solve(r, rhs, TriSide::upper) - x0).norm() < 1e-10 * x0.norm());
  }
}

TEST_CASE("tri_solve rejects zero diagonals") {
  SparseUpper r = upper_from_triplets(2, {{0, 0, 1.0}, {1, 1, 0.0}});
  Eigen::VectorXd b(2);
  b << 1, 1;
  CHECK_THROWS_AS(tri_solve(r, b, TriSide::upper), NumericError);
}

TEST_CASE("dense logdet basics and eigenvalue oracle") {
  CHECK(dense_logdet(Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(0.0));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = std::exp(1.0);
  d(1, 1) = std::exp(2.0);
  CHECK(dense_logdet(d) == doctest::Approx(3.0).epsilon(1e-14));

  CounterRng rng(77);
  Eigen::MatrixXd m(20, 20);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) m(i, j) = rng.normal();
  }
  Eigen::MatrixXd a = m * m.transpose() + Eigen::MatrixXd::Identity(20, 20);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const double oracle = eig.eigenvalues().array().log().sum();
  CHECK(dense_logdet(a) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("dense routines enforce the size cap") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(9, 9);
  CHECK_THROWS_AS(dense_chol(a, 8), SizeError);
  CHECK_THROWS_AS(dense_logdet(a, 8), SizeError);
  CHECK_THROWS_AS(dense_solve(a, a, 8), SizeError);
}

TEST_CASE("builders validate their invariants") {
  CHECK_THROWS_AS(upper_from_triplets(2, {{1, 0, 1.0}, {0, 0, 1.0}, {1, 1, 1.0}}),
                  ArgumentError);
  CHECK_THROWS_AS(upper_from_triplets(2, {{0, 0, 1.0}}), ArgumentError);  // missing diagonal
  CHECK_THROWS_AS(sym_from_triplets(2, {{0, 0, 1.0}}), ArgumentError);
  CHECK_THROWS_AS(csc_from_triplets(2, 2, {{0, 5, 1.0}}), ArgumentError);
}
