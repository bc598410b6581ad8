#include <cmath>

#include "doctest.h"
#include "vecchia/errors.hpp"
#include "vecchia/kernels.hpp"

using namespace vecchia;

namespace {

double matern_15_closed(double sigma2, double rho, double d) {
  const double a = std::sqrt(3.0) * d / rho;
  return sigma2 * (1.0 + a) * std::exp(-a);
}

double matern_25_closed(double sigma2, double rho, double d) {
  const double a = std::sqrt(5.0) * d / rho;
  return sigma2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

}  // namespace

TEST_CASE("matern at zero distance is the variance") {
  MaternParams p(2.5, 1.7, 0.4);
  CHECK(matern(p, 0.0) == 2.5);
}

TEST_CASE("matern nu=1/2 is the exponential covariance") {
  const double alpha = 0.37;
  MaternParams p(2.0, 0.5, alpha);
  CHECK(matern(p, alpha) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("general-nu path matches the half-integer closed forms") {
  MaternParams p15(1.0, 1.5, 0.3);
  CHECK(detail::matern_bessel(p15, 0.2) ==
        doctest::Approx(matern_15_closed(1.0, 0.3, 0.2)).epsilon(1e-10));
  MaternParams p05(1.3, 0.5, 0.7);
  CHECK(detail::matern_bessel(p05, 0.9) ==
        doctest::Approx(1.3 * std::exp(-0.9 / 0.7)).epsilon(1e-10));
  MaternParams p25(0.8, 2.5, 1.1);
  for (double d : {0.05, 0.4, 1.0, 3.0, 8.0}) {
    CHECK(detail::matern_bessel(p25, d) ==
          doctest::Approx(matern_25_closed(0.8, 1.1, d)).epsilon(1e-10));
  }
}

TEST_CASE("matern is continuous across the closed-form switch") {
  for (double nu : {0.5, 1.5, 2.5}) {
    MaternParams lo(1.0, nu - 1e-6, 0.4);
    MaternParams mid(1.0, nu, 0.4);
    MaternParams hi(1.0, nu + 1e-6, 0.4);
    for (double d : {0.1, 0.5, 2.0}) {
      const double v = matern(mid, d);
      CHECK(matern(lo, d) == doctest::Approx(v).epsilon(1e-4));
      CHECK(matern(hi, d) == doctest::Approx(v).epsilon(1e-4));
    }
  }
}

TEST_CASE("bessel_k against high-precision reference values") {
  // reference values computed with 40-digit arithmetic
  CHECK(bessel_k(0.0, 0.5) == doctest::Approx(0.92441907122766586178).epsilon(1e-13));
  CHECK(bessel_k(0.0, 3.0) == doctest::Approx(0.034739504386279248072).epsilon(1e-13));
  CHECK(bessel_k(1.0, 0.5) == doctest::Approx(1.6564411200033008937).epsilon(1e-13));
  CHECK(bessel_k(2.5, 1.7) == doctest::Approx(0.66778199961173977881).epsilon(1e-13));
  CHECK(bessel_k(3.3, 0.05) == doctest::Approx(259621.96862913567936).epsilon(1e-12));
  CHECK(bessel_k(7.25, 12.0) == doctest::Approx(1.7215982446975531067e-5).epsilon(1e-12));
  CHECK(bessel_k(10.0, 1.0) == doctest::Approx(1.8071328990102945469e8).epsilon(1e-12));
  CHECK(bessel_k(0.25, 2.0) == doctest::Approx(0.11537827684085675697).epsilon(1e-13));
  CHECK(bessel_k(0.5, 2.0) == doctest::Approx(0.11993777196806144737).epsilon(1e-13));
}

TEST_CASE("matern general-nu against high-precision reference values") {
  CHECK(matern(MaternParams(1.0, 0.75, 0.3), 0.2) ==
        doctest::Approx(0.58218986059339705314).epsilon(1e-12));
  CHECK(matern(MaternParams(1.0, 3.0, 0.5), 0.1) ==
        doctest::Approx(0.97083584909789177474).epsilon(1e-12));
  CHECK(matern(MaternParams(1.0, 3.0, 0.5), 0.6) ==
        doctest::Approx(0.42502913174754401355).epsilon(1e-12));
  CHECK(matern(MaternParams(2.0, 10.0, 1.0), 0.45) ==
        doctest::Approx(1.7885796282305014706).epsilon(1e-12));
  CHECK(matern(MaternParams(1.0, 1.0, 0.25), 0.7) ==
        doctest::Approx(0.051760246346952241921).epsilon(1e-12));
  CHECK(matern(MaternParams(0.5, 4.5, 2.0), 3.0) ==
        doctest::Approx(0.1486522599273548638).epsilon(1e-12));
}

TEST_CASE("matern rejects non-finite distance") {
  MaternParams p(1.0, 0.5, 1.0);
  CHECK_THROWS_AS(matern(p, std::nan("")), ArgumentError);
  CHECK_THROWS_AS(matern(p, -1.0), ArgumentError);
}

TEST_CASE("matern is nonincreasing in distance") {
  for (double nu : {0.5, 1.5, 2.5, 0.8, 3.0, 10.0}) {
    MaternParams p(1.0, nu, 0.6);
    double prev = matern(p, 0.0);
    for (double d = 0.02; d < 4.0; d += 0.02) {
      const double v = matern(p, d);
      CHECK(v <= prev + 1e-14);
      prev = v;
    }
  }
}

TEST_CASE("effective range closed form at nu=1/2") {
  CHECK(effective_range_to_scale(0.5, 0.9) ==
        doctest::Approx(0.9 / std::log(20.0)).epsilon(1e-14));
}

TEST_CASE("effective range round trip over smoothness values") {
  for (double nu : {0.5, 1.5, 2.5}) {
    const double rho = effective_range_to_scale(nu, 0.9);
    const double corr = matern(MaternParams(1.0, nu, rho), 0.9);
    CHECK(corr == doctest::Approx(0.05).epsilon(1e-9));
  }
  // reference values from 40-digit root solving
  CHECK(effective_range_to_scale(1.5, 0.9) ==
        doctest::Approx(0.32860249713473048116).epsilon(1e-9));
  CHECK(effective_range_to_scale(2.5, 0.9) ==
        doctest::Approx(0.34002034281764336136).epsilon(1e-9));
}

TEST_CASE("signal proportion construction") {
  const CovarianceModel m = CovarianceModel::from_signal_proportion(0.25, 1.0, 0.5, 0.3);
  CHECK(m.matern.sigma2 == doctest::Approx(0.25));
  CHECK(m.tau2 == doctest::Approx(0.75));
  CHECK(m.signal_proportion() == doctest::Approx(0.25));
}

TEST_CASE("cross_cov basics and nugget placement") {
  CovarianceModel model(MaternParams(1.5, 0.5, 0.4), 0.25);
  Eigen::MatrixXd pts(3, 2);
  pts << 0.0, 0.0, 0.3, 0.1, 0.9, 0.7;
  LocationSet s(pts);

  auto yy = cross_cov(model, s, {0}, {0}, CovKind::yy);
  CHECK(yy(0, 0) == doctest::Approx(1.5));
  auto zz = cross_cov(model, s, {0}, {0}, CovKind::zz);
  CHECK(zz(0, 0) == doctest::Approx(1.75));
  auto zz_cross = cross_cov(model, s, {0}, {1}, CovKind::zz);
  CHECK(zz_cross(0, 0) == doctest::Approx(matern(model.matern, s.distance(0, 1))));

  auto zy = cross_cov(model, s, {0, 1, 2}, {1, 2}, CovKind::zy);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) {
      const int pc = c + 1;
      CHECK(zy(r, c) == doctest::Approx(matern(model.matern, s.distance(r, pc))));
    }
  }
}

TEST_CASE("cross_cov rejects dimension mismatch and empty slices") {
  CovarianceModel model(MaternParams(1.0, 0.5, 0.4), 0.1);
  LocationSet a(Eigen::MatrixXd::Identity(2, 2));
  Eigen::MatrixXd pts(2, 3);
  pts << 0, 0, 0, 1, 1, 1;
  LocationSet b(pts);
  CHECK_THROWS_AS(cross_cov(model, a, {0}, b, {0}, CovKind::yy), ArgumentError);
  CHECK_THROWS_AS(cross_cov(model, a, {}, a, {0}, CovKind::yy), ArgumentError);
}

TEST_CASE("zz covariance of distinct points is positive definite") {
  CovarianceModel model(MaternParams(1.0, 1.5, 0.3), 0.2);
  Eigen::MatrixXd pts(12, 2);
  for (int i = 0; i < 12; ++i) {
    pts(i, 0) = 0.083 * i;
    pts(i, 1) = std::sin(1.7 * i);
  }
  LocationSet s(pts);
  std::vector<int> all(12);
  for (int i = 0; i < 12; ++i) all[i] = i;
  Eigen::MatrixXd c = cross_cov(model, s, all, all, CovKind::zz);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  CHECK(llt.info() == Eigen::Success);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}
