#pragma once

#include <string>
#include <vector>

#include "vecchia/geom.hpp"

namespace vecchia {

/// How each block picks the earlier blocks it conditions on.
struct ConditioningRule {
  enum class Kind { nearest, first_m, explicit_list };
  Kind kind = Kind::nearest;
  int m = 0;                                   // budget for nearest / first_m
  std::vector<std::vector<int>> lists;         // per ordered block, for explicit_list

  static ConditioningRule nearest(int m) { return {Kind::nearest, m, {}}; }
  static ConditioningRule first_m(int m) { return {Kind::first_m, m, {}}; }
  static ConditioningRule explicit_lists(std::vector<std::vector<int>> lists) {
    return {Kind::explicit_list, 0, std::move(lists)};
  }
};

/// A full approximation plan: grouped, ordered locations plus per-block
/// conditioning sets q(i) split into latent (qy) and observed (qz) parts.
/// All indices below are ordered block positions (0-based).
struct VecchiaPlan {
  LocationSet locations;
  Grouping grouping;        // blocks in native order, original point indices
  Ordering block_order;     // ordered position -> native block index
  std::vector<char> observed;
  std::vector<std::vector<int>> q;   // strictly earlier positions, ascending
  std::vector<std::vector<int>> qy;  // disjoint split of q
  std::vector<std::vector<int>> qz;  // every entry observed

  int block_count() const { return block_order.size(); }
  const std::vector<int>& block_points(int pos) const {
    return grouping.block(block_order.at(pos));
  }
  int block_size(int pos) const { return static_cast<int>(block_points(pos).size()); }
  bool is_observed(int pos) const { return observed[pos] != 0; }
  int observed_count() const;
  int observed_point_count() const;

  // Centroids of the ordered blocks, one per row.
  Eigen::MatrixXd block_centroids() const;

  // Throws ArgumentError if any structural invariant is broken.
  void validate() const;
};

// Conditioning sets per ordered block under the given rule. Nearest uses
// block-centroid distances (point distances for singletons).
std::vector<std::vector<int>> build_q(const LocationSet& s, const Grouping& grouping,
                                      const Ordering& block_order, const ConditioningRule& rule);

// qz(i) = q(i), qy(i) = (); conditioning sets must reference observed blocks,
// unobserved entries are dropped from q with a warning.
VecchiaPlan partition_standard(VecchiaPlan plan, std::vector<std::string>* warnings = nullptr);

// qy(i) = q(i), qz(i) = ().
VecchiaPlan partition_latent(VecchiaPlan plan);

// Maximize latent conditioning subject to the admissibility rule: j < k may
// both sit in qy(i) only if j is in qy(k). For each block the anchor is the
// candidate whose qy overlaps q(i) the most, ties broken by centroid distance.
VecchiaPlan partition_sgv(VecchiaPlan plan, std::vector<std::string>* warnings = nullptr);

struct SgvCheck {
  bool admissible = true;
  int block = -1;     // first violating block position
  int pair_lo = -1;   // violating pair (positions) within qy(block)
  int pair_hi = -1;
};
SgvCheck check_sgv_admissible(const VecchiaPlan& plan);

// All conditioning sets empty; one block per bounding-box tile.
VecchiaPlan make_independent_blocks(const LocationSet& s, int blocks_per_side);

// Singleton blocks in coordinate order, each conditioning (latently) on the
// previous m.
VecchiaPlan make_ar(const LocationSet& s, int m);

// Unobserved knot block first, every data point a singleton block
// conditioning (latently) on the knots.
VecchiaPlan make_mpp(const LocationSet& data, const LocationSet& knots);

// Knot block first, remaining points tiled into blocks that condition only on
// the knots.
VecchiaPlan make_fsa(const LocationSet& data, const LocationSet& knots, int blocks_per_side);

// Recursive domain splitting into j_split subregions per level; each region
// contributes a block of up to r_per_region points (chosen by maxmin), with
// leftover points collected at the finest level. Blocks condition on all
// ancestor regions.
VecchiaPlan make_mra(const LocationSet& s, int j_split, int levels, int r_per_region);

enum class PartitionKind { standard, latent, sgv };
enum class OrderingKind { native, coord, maxmin };

// Singleton-block plan: order points, build q under the rule, apply the
// partition strategy.
VecchiaPlan make_pointwise_plan(const LocationSet& s, OrderingKind ordering,
                                const ConditioningRule& rule, PartitionKind partition,
                                std::vector<std::string>* warnings = nullptr);

}  // namespace vecchia
