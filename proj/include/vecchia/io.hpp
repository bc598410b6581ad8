#pragma once

#include <optional>
#include <string>

#include "json.hpp"  // vendored nlohmann single header

#include "vecchia/dag.hpp"
#include "vecchia/inference.hpp"
#include "vecchia/kernels.hpp"
#include "vecchia/plan.hpp"

namespace vecchia {

using Json = nlohmann::json;

// Deterministic formatting used in every CSV we emit.
std::string format_double(double v);

void write_locations_csv(const std::string& path, const LocationSet& s);
LocationSet read_locations_csv(const std::string& path);

struct Observations {
  LocationSet locations;
  Eigen::VectorXd z;
  std::optional<Eigen::VectorXd> y;
};

// Columns x1..xd, optional y, and z.
void write_observations_csv(const std::string& path, const LocationSet& s,
                            const std::optional<Eigen::VectorXd>& y, const Eigen::VectorXd& z);
Observations read_observations_csv(const std::string& path);

// 1-based index arrays.
Json ordering_to_json(const Ordering& o);
Ordering ordering_from_json(const Json& j);
Json grouping_to_json(const Grouping& g);
Grouping grouping_from_json(const Json& j, int n_items);

Json plan_to_json(const VecchiaPlan& plan);

// FNV-1a digest of the canonical plan serialization.
std::string plan_hash(const VecchiaPlan& plan);
std::string json_digest(const Json& j);

// {sigma2, nu, range: {kind: "scale"|"effective", value}, tau2}
CovarianceModel model_from_json(const Json& j);
Json model_to_json(const CovarianceModel& m);

Json loglik_to_json(const LoglikResult& r, const std::string& plan_hash);
Json posterior_to_json(const PosteriorSummary& p, const std::string& plan_hash);

void write_pattern_csv(const std::string& path, const SparsityPattern& p);
void write_sparse_csv(const std::string& path, const SparseUpper& u);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace vecchia
