#include "vecchia/kernels.hpp"

#include <cmath>
#include <limits>

#include "vecchia/errors.hpp"

namespace vecchia {

namespace {

constexpr double kEulerGamma = 0.57721566490153286061;

void check_positive_finite(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ArgumentError(std::string(name) + " must be positive and finite");
  }
}

// gam1 = [1/Gamma(1-mu) - 1/Gamma(1+mu)] / (2 mu), gam2 = their mean,
// gampl = 1/Gamma(1+mu), gammi = 1/Gamma(1-mu); |mu| <= 1/2.
void temme_gammas(double mu, double& gam1, double& gam2, double& gampl, double& gammi) {
  gampl = 1.0 / std::tgamma(1.0 + mu);
  gammi = 1.0 / std::tgamma(1.0 - mu);
  if (std::abs(mu) < 1e-4) {
    // series around mu = 0; the mu^2 coefficient is g3/6 + zeta(3)/3 - g*pi^2/12
    const double c2 = kEulerGamma * kEulerGamma * kEulerGamma / 6.0 + 0.40068563438653142847 -
                      kEulerGamma * 0.82246703342411321824;
    gam1 = -(kEulerGamma + c2 * mu * mu);
  } else {
    gam1 = (gammi - gampl) / (2.0 * mu);
  }
  gam2 = 0.5 * (gammi + gampl);
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, 0 < x <= 2 (Temme's series).
void bessel_k_temme(double mu, double x, double& k_mu, double& k_mu1) {
  constexpr int kMaxIter = 20000;
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  const double x2 = 0.5 * x;
  const double pimu = M_PI * mu;
  const double fact = (std::abs(pimu) < 1e-15) ? 1.0 : pimu / std::sin(pimu);
  double d = -std::log(x2);
  double e = mu * d;
  const double fact2 = (std::abs(e) < 1e-15) ? 1.0 : std::sinh(e) / e;
  double gam1, gam2, gampl, gammi;
  temme_gammas(mu, gam1, gam2, gampl, gammi);
  double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
  double sum = ff;
  e = std::exp(e);
  double p = 0.5 * e / gampl;
  double q = 0.5 / (e * gammi);
  double c = 1.0;
  d = x2 * x2;
  double sum1 = p;
  const double mu2 = mu * mu;
  int i = 1;
  for (; i <= kMaxIter; ++i) {
    ff = (i * ff + p + q) / (i * i - mu2);
    c *= d / i;
    p /= (i - mu);
    q /= (i + mu);
    const double del = c * ff;
    sum += del;
    const double del1 = c * (p - i * ff);
    sum1 += del1;
    if (std::abs(del) < std::abs(sum) * kEps) break;
  }
  if (i > kMaxIter) throw NumericError("bessel_k: series did not converge");
  k_mu = sum;
  k_mu1 = sum1 * (2.0 / x);
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, x > 2 (Steed's continued fraction).
void bessel_k_cf2(double mu, double x, double& k_mu, double& k_mu1) {
  constexpr int kMaxIter = 20000;
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  const double mu2 = mu * mu;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu2;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  int i = 2;
  for (; i <= kMaxIter; ++i) {
    a -= 2 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < kEps) break;
  }
  if (i > kMaxIter) throw NumericError("bessel_k: continued fraction did not converge");
  h = a1 * h;
  k_mu = std::sqrt(M_PI / (2.0 * x)) * std::exp(-x) / s;
  k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
}

}  // namespace

MaternParams::MaternParams(double sigma2_, double nu_, double scale_)
    : sigma2(sigma2_), nu(nu_), scale(scale_) {
  check_positive_finite(sigma2, "MaternParams: sigma2");
  check_positive_finite(nu, "MaternParams: nu");
  check_positive_finite(scale, "MaternParams: scale");
}

CovarianceModel::CovarianceModel(MaternParams m, double tau2_) : matern(m), tau2(tau2_) {
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) {
    throw ArgumentError("CovarianceModel: tau2 must be >= 0 and finite");
  }
}

CovarianceModel CovarianceModel::from_signal_proportion(double p, double total_var, double nu,
                                                        double scale) {
  if (!(p > 0.0) || !(p <= 1.0)) {
    throw ArgumentError("CovarianceModel: signal proportion must be in (0, 1]");
  }
  check_positive_finite(total_var, "CovarianceModel: total_var");
  return CovarianceModel(MaternParams(p * total_var, nu, scale), (1.0 - p) * total_var);
}

double bessel_k(double nu, double x) {
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw ArgumentError("bessel_k: order must be >= 0");
  if (!(x > 0.0) || !std::isfinite(x)) throw ArgumentError("bessel_k: argument must be > 0");

  const int n = static_cast<int>(nu + 0.5);
  const double mu = nu - n;  // |mu| <= 1/2
  double k_mu, k_mu1;
  if (x <= 2.0) {
    bessel_k_temme(mu, x, k_mu, k_mu1);
  } else {
    bessel_k_cf2(mu, x, k_mu, k_mu1);
  }
  for (int j = 1; j <= n; ++j) {  // K_{v+1} = K_{v-1} + (2v/x) K_v
    const double k_next = k_mu + 2.0 * (mu + j) / x * k_mu1;
    k_mu = k_mu1;
    k_mu1 = k_next;
  }
  return k_mu;  // K_{mu+n}
}

namespace detail {

double matern_bessel(const MaternParams& p, double dist) {
  if (dist == 0.0) return p.sigma2;
  const double a = std::sqrt(2.0 * p.nu) * dist / p.scale;
  const double log_pref = (1.0 - p.nu) * std::log(2.0) - std::lgamma(p.nu) + p.nu * std::log(a);
  const double k = bessel_k(p.nu, a);
  if (k <= 0.0) return 0.0;  // underflow at very large distances
  return p.sigma2 * std::exp(log_pref + std::log(k));
}

}  // namespace detail

double matern(const MaternParams& p, double dist) {
  if (!(dist >= 0.0) || !std::isfinite(dist)) {
    throw ArgumentError("matern: distance must be >= 0 and finite");
  }
  if (dist == 0.0) return p.sigma2;
  if (p.nu == 0.5) {
    return p.sigma2 * std::exp(-dist / p.scale);
  }
  if (p.nu == 1.5) {
    const double a = std::sqrt(3.0) * dist / p.scale;
    return p.sigma2 * (1.0 + a) * std::exp(-a);
  }
  if (p.nu == 2.5) {
    const double a = std::sqrt(5.0) * dist / p.scale;
    return p.sigma2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
  }
  return detail::matern_bessel(p, dist);
}

double effective_range_to_scale(double nu, double lambda) {
  check_positive_finite(nu, "effective_range_to_scale: nu");
  check_positive_finite(lambda, "effective_range_to_scale: lambda");
  if (nu == 0.5) return lambda / std::log(20.0);

  const auto corr = [&](double rho) { return matern(MaternParams(1.0, nu, rho), lambda); };
  double lo = lambda / 100.0;
  double hi = lambda * 100.0;
  double f_lo = corr(lo) - 0.05;
  double f_hi = corr(hi) - 0.05;
  if (f_lo > 0.0 || f_hi < 0.0) {  // correlation is increasing in rho
    throw NumericError("effective_range_to_scale: bracket failure at [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((corr(mid) - 0.05) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if ((hi - lo) <= 1e-10 * hi) break;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd cross_cov(const CovarianceModel& model, const LocationSet& sa,
                          const std::vector<int>& ia, const LocationSet& sb,
                          const std::vector<int>& ib, CovKind kind) {
  if (ia.empty() || ib.empty()) throw ArgumentError("cross_cov: empty slice");
  if (sa.dim() != sb.dim()) throw ArgumentError("cross_cov: dimension mismatch");
  const bool same_set = (&sa == &sb);
  Eigen::MatrixXd out(ia.size(), ib.size());
  for (std::size_t r = 0; r < ia.size(); ++r) {
    for (std::size_t c = 0; c < ib.size(); ++c) {
      const double d = (sa.points().row(ia[r]) - sb.points().row(ib[c])).norm();
      double v = matern(model.matern, d);
      if (kind == CovKind::zz && same_set && ia[r] == ib[c]) v += model.tau2;
      out(r, c) = v;
    }
  }
  return out;
}

}  // namespace vecchia
