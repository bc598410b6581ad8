#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "vecchia/dag.hpp"
#include "vecchia/kernels.hpp"
#include "vecchia/plan.hpp"
#include "vecchia/sparse.hpp"

namespace vecchia {

// Below this fraction of the signal variance the nugget is treated as zero
// and likelihoods fall back to direct observed-vector conditioning.
inline constexpr double kNuggetFloorFraction = 1e-12;

/// Scalar layout of the interleaved latent/observed vector.
struct XStructure {
  struct Vertex {
    VertexKind kind;
    int block;
    int offset;  // first scalar row
    int size;
  };
  int n_x = 0, n_y = 0, n_z = 0;
  std::vector<Vertex> vertices;
  std::vector<int> y_rows, z_rows;      // scalar indices, ascending
  std::vector<int> y_block_offset;      // per block: offset into the y vector
  std::vector<int> z_block_offset;      // per observed block: offset into z, else -1
};

XStructure x_structure(const VecchiaPlan& plan);

/// Assembled sparse factors for one (plan, model) pair.
struct FactorSet {
  XStructure xs;
  SparseUpper U;          // joint precision factor: U U' = C_hat^{-1}
  SparseMatrix U_Y, U_Z;  // latent / observed row slices of U
  SparseSym W;            // U_Y U_Y', the posterior precision of the latent vector
  SparseUpper V;          // rchol(W)
  std::vector<double> logdet_D;  // per x-vertex conditional covariance logdet
  double sum_logdet_D = 0.0;
};

// Build U column-by-column from the plan's conditional regressions, then
// form W and V. Requires a positive nugget whenever any block is observed.
FactorSet assemble_factors(const VecchiaPlan& plan, const CovarianceModel& model);

struct LoglikResult {
  double loglik = 0.0;
  // -2*loglik = sum_logdet_D + two_sum_log_V_diag + z_quad - posterior_quad + norm_const
  double sum_logdet_D = 0.0;
  double two_sum_log_V_diag = 0.0;
  double z_quad = 0.0;
  double posterior_quad = 0.0;
  double norm_const = 0.0;
};

// Integrated (latent-marginalized) log-likelihood of the observations,
// ordered consistently with the plan's blocks.
LoglikResult integrated_loglik(const FactorSet& f, const Eigen::VectorXd& z);

// Likelihood for a plan+model: assembles factors and integrates; with a
// vanishing nugget it falls back to the direct observed-vector product form.
double plan_loglik(const VecchiaPlan& plan, const CovarianceModel& model,
                   const Eigen::VectorXd& z);

struct PosteriorSummary {
  Eigen::VectorXd mean;          // latent posterior mean, y-order
  SparseUpper precision_factor;  // V with V V' = posterior precision
  std::optional<Eigen::VectorXd> marginal_var;
};

PosteriorSummary posterior_summary(const FactorSet& f, const Eigen::VectorXd& z,
                                   bool with_marginal_var = false);

// KL(exact || approximate) over the joint latent+observed vector; dense
// oracle, size-capped.
double kl_divergence_joint(const VecchiaPlan& plan, const CovarianceModel& model,
                           int cap = kDenseOracleCap);

// KL(exact || approximate) over the observed vector after marginalizing the
// latent part densely; size-capped. Handles the zero-nugget degeneration by
// conditioning directly on observations.
double kl_divergence_observed(const VecchiaPlan& plan, const CovarianceModel& model,
                              int cap = kDenseOracleCap);

// Exact dense log-likelihood of z under the model (oracle).
double dense_loglik(const CovarianceModel& model, const LocationSet& s, const Eigen::VectorXd& z,
                    int cap = kDenseOracleCap);

// Direct product of observed-vector conditionals over the plan's q sets.
// `include_nugget=false` evaluates the noise-free covariance (zero-nugget
// fallback).
double observed_product_loglik(const VecchiaPlan& plan, const CovarianceModel& model,
                               const Eigen::VectorXd& z, bool include_nugget = true);

// Sum of full-conditional univariate log densities (dense, size-capped).
double fcl_loglik(const CovarianceModel& model, const LocationSet& s, const Eigen::VectorXd& z,
                  int cap = kDenseOracleCap);

// Sum of joint log densities over the listed block pairs.
double pbl_loglik(const CovarianceModel& model, const LocationSet& s, const Grouping& grouping,
                  const std::vector<std::pair<int, int>>& pairs, const Eigen::VectorXd& z);

// Rook-adjacent tile pairs for the blocks produced by block_partition with
// the same blocks_per_side (empty tiles skipped consistently).
std::vector<std::pair<int, int>> rook_neighbor_pairs(const LocationSet& s, int blocks_per_side);

/// Maximum-likelihood fitting via Nelder-Mead in log-parameter space.
struct FreeParam {
  enum class Which { sigma2, range, tau2 };
  Which which;
  double lower, upper, init;
};

struct FitStage {
  int stage = 0;
  int m = 0;
  int eval_count = 0;
  std::vector<double> start;   // parameter values at stage start
  std::vector<double> params;  // optimum of this stage
  double loglik = 0.0;
  bool converged = false;
};

struct FitResult {
  CovarianceModel fitted;
  std::vector<FitStage> trace;
  bool converged = false;
};

using PlanFactory = std::function<VecchiaPlan(int m)>;

// Warm-started fit: for each m in the schedule, rebuild the plan and maximize
// plan_loglik from the previous stage's optimum.
FitResult mle_fit(const PlanFactory& plans, const CovarianceModel& base,
                  const Eigen::VectorXd& z, const std::vector<FreeParam>& free,
                  const std::vector<int>& m_schedule);

// Same optimizer against the exact dense likelihood.
FitResult mle_fit_exact(const LocationSet& s, const CovarianceModel& base,
                        const Eigen::VectorXd& z, const std::vector<FreeParam>& free);

// Same optimizer against an arbitrary likelihood (composite baselines).
FitResult mle_fit_custom(const std::function<double(const CovarianceModel&)>& loglik,
                         const CovarianceModel& base, const std::vector<FreeParam>& free);

namespace detail {
// Joint precision of the plan's Gaussian assembled by dense conditional
// regressions (oracle route, no sparse factor involved).
Eigen::MatrixXd dense_joint_precision(const VecchiaPlan& plan, const CovarianceModel& model);
// Exact covariance of the interleaved latent+observed vector.
Eigen::MatrixXd exact_x_covariance(const VecchiaPlan& plan, const CovarianceModel& model);
// Gaussian KL(N(0,c_true) || N(0,c_approx)) given the approximate precision.
double gaussian_kl(const Eigen::MatrixXd& c_true, const Eigen::MatrixXd& approx_precision,
                   double approx_precision_logdet);
}  // namespace detail

}  // namespace vecchia
