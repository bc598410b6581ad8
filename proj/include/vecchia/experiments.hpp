#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vecchia/io.hpp"
#include "vecchia/plan.hpp"
#include "vecchia/rng.hpp"

namespace vecchia {

// Dense simulation refuses larger fields.
inline constexpr int kSimulationCap = 10000;

struct SimulationDraw {
  Eigen::VectorXd y;  // latent field
  Eigen::VectorXd z;  // y plus nugget noise
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// y = chol(K) u with u from the counter generator, z = y + tau e.
SimulationDraw simulate_draw(const CovarianceModel& model, const LocationSet& s,
                             std::uint64_t seed, std::uint64_t stream = 0,
                             int cap = kSimulationCap);

/// Geometry described by a config: a grid (optionally jittered per replicate)
/// or a CSV of locations.
struct GeometrySpec {
  std::string kind = "grid";  // "grid" | "csv"
  int dim = 2;
  int points_per_side = 20;
  double spacing = 1.0;
  double jitter = 0.0;  // fraction of spacing, applied per jitter stream
  std::string csv_path;

  static GeometrySpec from_json(const Json& j);
  LocationSet build(std::uint64_t seed, int jitter_index = 0) const;
};

/// One approximation method of an experiment grid.
struct MethodSpec {
  std::string name;
  std::string family = "pointwise";  // pointwise|independent_blocks|mpp|fsa|mra
  PartitionKind partition = PartitionKind::sgv;
  OrderingKind ordering = OrderingKind::maxmin;
  ConditioningRule::Kind conditioning = ConditioningRule::Kind::nearest;
  int m = 5;
  int blocks_per_side = 1;
  int knots_per_side = 3;  // for mpp/fsa: knot grid resolution
  int mra_j = 2, mra_levels = 2, mra_r = 1;

  static MethodSpec from_json(const Json& j);
};

VecchiaPlan build_plan(const LocationSet& s, const MethodSpec& spec);

struct CliOptions {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int threads = 1;
};

// Subcommand drivers; return process exit codes (0 ok, 2 partial failures).
int run_simulate(const Json& config, const CliOptions& opts);
int run_loglik(const Json& config, const CliOptions& opts);
int run_fit(const Json& config, const CliOptions& opts);
int run_posterior(const Json& config, const CliOptions& opts);
int run_kl_grid(const Json& config, const CliOptions& opts);
int run_sparsity(const Json& config, const CliOptions& opts);
int run_estimation_study(const Json& config, const CliOptions& opts);

// Shared by the drivers and the integration tests: run every cell of an
// index range through `cell`, possibly threaded, collecting ordered rows.
void parallel_cells(int count, int threads, const std::function<void(int)>& cell);

}  // namespace vecchia
