#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vecchia/geom.hpp"

namespace vecchia {

struct MaternParams {
  double sigma2;  // marginal variance
  double nu;      // smoothness
  double scale;   // range parameter rho

  MaternParams(double sigma2_, double nu_, double scale_);
};

/// Matern field plus independent observation noise.
struct CovarianceModel {
  MaternParams matern;
  double tau2;  // nugget variance, >= 0

  CovarianceModel(MaternParams m, double tau2_);

  // sigma2 = p * total_var, tau2 = (1 - p) * total_var.
  static CovarianceModel from_signal_proportion(double p, double total_var, double nu,
                                                double scale);

  double signal_proportion() const { return matern.sigma2 / (matern.sigma2 + tau2); }
};

// Matern covariance at a given distance. Closed forms for nu in {1/2, 3/2,
// 5/2}; other nu evaluated through bessel_k.
double matern(const MaternParams& p, double dist);

// Modified Bessel function of the second kind, real order nu >= 0, x > 0.
// Temme's series for x <= 2, continued fraction for x > 2, upward recurrence
// in the order.
double bessel_k(double nu, double x);

// Solve for the scale rho at which the Matern correlation at distance lambda
// equals 0.05. Closed form for nu = 1/2, otherwise bisection over
// [lambda/100, 100*lambda].
double effective_range_to_scale(double nu, double lambda);

enum class CovKind { yy, zy, zz };

// Pairwise covariance matrix between two index slices of location sets.
// The nugget enters only at zz entries whose two locations are the same point
// of the same set.
Eigen::MatrixXd cross_cov(const CovarianceModel& model, const LocationSet& sa,
                          const std::vector<int>& ia, const LocationSet& sb,
                          const std::vector<int>& ib, CovKind kind);

inline Eigen::MatrixXd cross_cov(const CovarianceModel& model, const LocationSet& s,
                                 const std::vector<int>& ia, const std::vector<int>& ib,
                                 CovKind kind) {
  return cross_cov(model, s, ia, s, ib, kind);
}

namespace detail {
// General-nu evaluation path, exposed so tests can pin it against the
// half-integer closed forms.
double matern_bessel(const MaternParams& p, double dist);
}  // namespace detail

}  // namespace vecchia
