#include "vecchia/plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "vecchia/errors.hpp"

namespace vecchia {

int VecchiaPlan::observed_count() const {
  return static_cast<int>(std::count(observed.begin(), observed.end(), char(1)));
}

int VecchiaPlan::observed_point_count() const {
  int n = 0;
  for (int i = 0; i < block_count(); ++i) {
    if (is_observed(i)) n += block_size(i);
  }
  return n;
}

Eigen::MatrixXd VecchiaPlan::block_centroids() const {
  Eigen::MatrixXd c(block_count(), locations.dim());
  for (int i = 0; i < block_count(); ++i) {
    c.row(i) = centroid(locations.points(), block_points(i));
  }
  return c;
}

void VecchiaPlan::validate() const {
  const int l = block_count();
  if (static_cast<int>(observed.size()) != l || static_cast<int>(q.size()) != l ||
      static_cast<int>(qy.size()) != l || static_cast<int>(qz.size()) != l) {
    throw ArgumentError("VecchiaPlan: field sizes disagree with block count");
  }
  if (grouping.n_items() != locations.size()) {
    throw ArgumentError("VecchiaPlan: grouping does not match locations");
  }
  for (int i = 0; i < l; ++i) {
    std::set<int> qs(q[i].begin(), q[i].end());
    if (qs.size() != q[i].size()) throw ArgumentError("VecchiaPlan: duplicate entry in q");
    for (int j : q[i]) {
      if (j < 0 || j >= i) {
        throw ArgumentError("VecchiaPlan: q(" + std::to_string(i) +
                            ") must reference strictly earlier blocks");
      }
    }
    std::set<int> ys(qy[i].begin(), qy[i].end()), zs(qz[i].begin(), qz[i].end());
    for (int j : ys) {
      if (zs.count(j)) throw ArgumentError("VecchiaPlan: qy and qz overlap");
      if (!qs.count(j)) throw ArgumentError("VecchiaPlan: qy not a subset of q");
    }
    for (int j : zs) {
      if (!qs.count(j)) throw ArgumentError("VecchiaPlan: qz not a subset of q");
      if (!observed[j]) throw ArgumentError("VecchiaPlan: qz references unobserved block");
    }
    if (ys.size() + zs.size() != qs.size()) {
      throw ArgumentError("VecchiaPlan: qy and qz do not cover q");
    }
  }
  if (!q.empty() && !q[0].empty()) throw ArgumentError("VecchiaPlan: q(0) must be empty");
}

std::vector<std::vector<int>> build_q(const LocationSet& s, const Grouping& grouping,
                                      const Ordering& block_order, const ConditioningRule& rule) {
  const int l = block_order.size();
  if (l != grouping.block_count()) throw ArgumentError("build_q: ordering/grouping mismatch");
  std::vector<std::vector<int>> q(l);
  switch (rule.kind) {
    case ConditioningRule::Kind::first_m: {
      if (rule.m < 0) throw ArgumentError("build_q: m must be >= 0");
      for (int i = 0; i < l; ++i) {
        const int take = std::min(rule.m, i);
        q[i].resize(take);
        std::iota(q[i].begin(), q[i].end(), 0);
      }
      break;
    }
    case ConditioningRule::Kind::nearest: {
      if (rule.m < 0) throw ArgumentError("build_q: m must be >= 0");
      Eigen::MatrixXd cent(l, s.dim());
      for (int i = 0; i < l; ++i) {
        cent.row(i) = centroid(s.points(), grouping.block(block_order.at(i)));
      }
      for (int i = 0; i < l; ++i) q[i] = detail::nearest_previous_rows(cent, i, rule.m);
      break;
    }
    case ConditioningRule::Kind::explicit_list: {
      if (static_cast<int>(rule.lists.size()) != l) {
        throw ArgumentError("build_q: explicit lists must cover every block");
      }
      for (int i = 0; i < l; ++i) {
        q[i] = rule.lists[i];
        std::sort(q[i].begin(), q[i].end());
        for (int j : q[i]) {
          if (j < 0 || j >= i) {
            throw ArgumentError("build_q: explicit q(" + std::to_string(i) +
                                ") references block " + std::to_string(j) +
                                " outside 0.." + std::to_string(i - 1));
          }
        }
        if (std::adjacent_find(q[i].begin(), q[i].end()) != q[i].end()) {
          throw ArgumentError("build_q: duplicate entry in explicit q");
        }
      }
      break;
    }
  }
  return q;
}

namespace {

void drop_unobserved(VecchiaPlan& plan, std::vector<int>& qi, int i,
                     std::vector<std::string>* warnings) {
  auto keep = std::vector<int>();
  for (int j : qi) {
    if (plan.observed[j]) {
      keep.push_back(j);
    } else if (warnings) {
      warnings->push_back("block " + std::to_string(i) + ": dropped unobserved block " +
                          std::to_string(j) + " from observed conditioning");
    }
  }
  qi = std::move(keep);
}

}  // namespace

VecchiaPlan partition_standard(VecchiaPlan plan, std::vector<std::string>* warnings) {
  const int l = plan.block_count();
  plan.qy.assign(l, {});
  plan.qz.assign(l, {});
  for (int i = 0; i < l; ++i) {
    drop_unobserved(plan, plan.q[i], i, warnings);
    plan.qz[i] = plan.q[i];
  }
  plan.validate();
  return plan;
}

VecchiaPlan partition_latent(VecchiaPlan plan) {
  const int l = plan.block_count();
  plan.qy = plan.q;
  plan.qz.assign(l, {});
  plan.validate();
  return plan;
}

VecchiaPlan partition_sgv(VecchiaPlan plan, std::vector<std::string>* warnings) {
  const int l = plan.block_count();
  const Eigen::MatrixXd cent = plan.block_centroids();
  plan.qy.assign(l, {});
  plan.qz.assign(l, {});
  for (int i = 0; i < l; ++i) {
    if (plan.q[i].empty()) continue;
    // anchor: candidate whose latent set overlaps q(i) the most, then nearest
    int anchor = -1;
    int best_overlap = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int j : plan.q[i]) {
      int overlap = 0;
      for (int t : plan.qy[j]) {
        if (std::binary_search(plan.q[i].begin(), plan.q[i].end(), t)) ++overlap;
      }
      const double d2 = (cent.row(i) - cent.row(j)).squaredNorm();
      if (overlap > best_overlap || (overlap == best_overlap && d2 < best_d2)) {
        anchor = j;
        best_overlap = overlap;
        best_d2 = d2;
      }
    }
    std::vector<int> ys;
    for (int t : plan.qy[anchor]) {
      if (std::binary_search(plan.q[i].begin(), plan.q[i].end(), t)) ys.push_back(t);
    }
    ys.push_back(anchor);
    std::sort(ys.begin(), ys.end());
    std::vector<int> zs;
    std::set_difference(plan.q[i].begin(), plan.q[i].end(), ys.begin(), ys.end(),
                        std::back_inserter(zs));
    drop_unobserved(plan, zs, i, warnings);
    if (zs.size() + ys.size() != plan.q[i].size()) {
      // rebuild q(i) after removals so the split stays a cover
      plan.q[i].clear();
      std::merge(ys.begin(), ys.end(), zs.begin(), zs.end(), std::back_inserter(plan.q[i]));
    }
    plan.qy[i] = std::move(ys);
    plan.qz[i] = std::move(zs);
  }
  plan.validate();
  return plan;
}

SgvCheck check_sgv_admissible(const VecchiaPlan& plan) {
  for (int i = 0; i < plan.block_count(); ++i) {
    const auto& ys = plan.qy[i];
    for (std::size_t a = 0; a < ys.size(); ++a) {
      for (std::size_t b = a + 1; b < ys.size(); ++b) {
        const int j = std::min(ys[a], ys[b]);
        const int k = std::max(ys[a], ys[b]);
        if (!std::binary_search(plan.qy[k].begin(), plan.qy[k].end(), j)) {
          return {false, i, j, k};
        }
      }
    }
  }
  return {};
}

namespace {

VecchiaPlan finish_latent(LocationSet locations, Grouping grouping, Ordering order,
                          std::vector<char> observed, std::vector<std::vector<int>> q) {
  VecchiaPlan plan{std::move(locations), std::move(grouping), std::move(order),
                   std::move(observed), std::move(q), {}, {}};
  return partition_latent(std::move(plan));
}

}  // namespace

VecchiaPlan make_independent_blocks(const LocationSet& s, int blocks_per_side) {
  Grouping g = block_partition(s, Ordering::identity(s.size()), blocks_per_side);
  const int l = g.block_count();
  VecchiaPlan plan{s,
                   std::move(g),
                   Ordering::identity(l),
                   std::vector<char>(l, 1),
                   std::vector<std::vector<int>>(l),
                   std::vector<std::vector<int>>(l),
                   std::vector<std::vector<int>>(l)};
  plan.validate();
  return plan;
}

VecchiaPlan make_ar(const LocationSet& s, int m) {
  if (m < 0) throw ArgumentError("make_ar: m must be >= 0");
  const int n = s.size();
  std::vector<std::vector<int>> blocks(n);
  for (int i = 0; i < n; ++i) blocks[i] = {i};
  Grouping g(std::move(blocks), n);
  Ordering order = coord_order(s);
  std::vector<std::vector<int>> q(n);
  for (int i = 0; i < n; ++i) {
    for (int j = std::max(0, i - m); j < i; ++j) q[i].push_back(j);
  }
  return finish_latent(s, std::move(g), std::move(order), std::vector<char>(n, 1), std::move(q));
}

namespace {

// Shared core of the knot-based constructors: knots become block 0 of a
// combined location set, data blocks follow.
VecchiaPlan knot_plan(const LocationSet& data, const LocationSet& knots,
                      const std::vector<std::vector<int>>& data_blocks) {
  if (knots.dim() != data.dim()) throw ArgumentError("knot plan: dimension mismatch");
  const int nk = knots.size();
  Eigen::MatrixXd pts(nk + data.size(), data.dim());
  pts.topRows(nk) = knots.points();
  pts.bottomRows(data.size()) = data.points();
  LocationSet all(std::move(pts));

  std::vector<std::vector<int>> blocks;
  std::vector<int> knot_block(nk);
  std::iota(knot_block.begin(), knot_block.end(), 0);
  blocks.push_back(std::move(knot_block));
  for (const auto& b : data_blocks) {
    std::vector<int> shifted;
    shifted.reserve(b.size());
    for (int i : b) shifted.push_back(i + nk);
    blocks.push_back(std::move(shifted));
  }
  const int l = static_cast<int>(blocks.size());
  Grouping g(std::move(blocks), all.size());
  std::vector<char> observed(l, 1);
  observed[0] = 0;
  std::vector<std::vector<int>> q(l);
  for (int i = 1; i < l; ++i) q[i] = {0};
  return finish_latent(std::move(all), std::move(g), Ordering::identity(l), std::move(observed),
                       std::move(q));
}

}  // namespace

VecchiaPlan make_mpp(const LocationSet& data, const LocationSet& knots) {
  std::vector<std::vector<int>> singletons(data.size());
  for (int i = 0; i < data.size(); ++i) singletons[i] = {i};
  return knot_plan(data, knots, singletons);
}

VecchiaPlan make_fsa(const LocationSet& data, const LocationSet& knots, int blocks_per_side) {
  Grouping tiles = block_partition(data, Ordering::identity(data.size()), blocks_per_side);
  return knot_plan(data, knots, tiles.blocks());
}

VecchiaPlan make_mra(const LocationSet& s, int j_split, int levels, int r_per_region) {
  if (j_split < 2) throw ArgumentError("make_mra: need at least 2 subregions per split");
  if (levels < 1) throw ArgumentError("make_mra: levels must be >= 1");
  if (r_per_region < 1) throw ArgumentError("make_mra: r_per_region must be >= 1");
  const int d = s.dim();

  // Split a region into j_split tiles: a sqrt x sqrt grid when d == 2 and
  // j_split is a perfect square, otherwise strips along the widest axis.
  struct Region {
    Eigen::RowVectorXd lo, hi;
    std::vector<int> candidates;  // point indices not yet claimed by an ancestor
    int parent;                   // region tree index, -1 for root
    int level;
  };
  const int root_sq = static_cast<int>(std::lround(std::sqrt(double(j_split))));
  const bool square_split = (d == 2 && root_sq * root_sq == j_split);

  std::vector<Region> regions;
  {
    Region root;
    root.lo = s.points().colwise().minCoeff();
    root.hi = s.points().colwise().maxCoeff();
    root.candidates.resize(s.size());
    std::iota(root.candidates.begin(), root.candidates.end(), 0);
    root.parent = -1;
    root.level = 0;
    regions.push_back(std::move(root));
  }

  std::vector<std::vector<int>> region_points;  // per region, selected points
  for (std::size_t ri = 0; ri < regions.size(); ++ri) {
    Region reg = regions[ri];  // copy: regions vector may reallocate below
    std::vector<int> selected;
    if (reg.level == levels) {
      selected = reg.candidates;  // finest level keeps everything left
      std::sort(selected.begin(), selected.end());
    } else {
      selected = detail::maxmin_select(s.points(), reg.candidates, r_per_region);
      std::vector<int> rest;
      std::set<int> sel(selected.begin(), selected.end());
      for (int c : reg.candidates) {
        if (!sel.count(c)) rest.push_back(c);
      }
      // carve child tiles
      std::vector<Region> children;
      if (square_split) {
        for (int a = 0; a < root_sq; ++a) {
          for (int b = 0; b < root_sq; ++b) {
            Region ch;
            ch.lo = reg.lo;
            ch.hi = reg.hi;
            const double w0 = (reg.hi[0] - reg.lo[0]) / root_sq;
            const double w1 = (reg.hi[1] - reg.lo[1]) / root_sq;
            ch.lo[0] = reg.lo[0] + a * w0;
            ch.hi[0] = (a + 1 == root_sq) ? reg.hi[0] : reg.lo[0] + (a + 1) * w0;
            ch.lo[1] = reg.lo[1] + b * w1;
            ch.hi[1] = (b + 1 == root_sq) ? reg.hi[1] : reg.lo[1] + (b + 1) * w1;
            ch.parent = static_cast<int>(ri);
            ch.level = reg.level + 1;
            children.push_back(std::move(ch));
          }
        }
      } else {
        int axis = 0;
        (reg.hi - reg.lo).maxCoeff(&axis);
        const double w = (reg.hi[axis] - reg.lo[axis]) / j_split;
        for (int a = 0; a < j_split; ++a) {
          Region ch;
          ch.lo = reg.lo;
          ch.hi = reg.hi;
          ch.lo[axis] = reg.lo[axis] + a * w;
          ch.hi[axis] = (a + 1 == j_split) ? reg.hi[axis] : reg.lo[axis] + (a + 1) * w;
          ch.parent = static_cast<int>(ri);
          ch.level = reg.level + 1;
          children.push_back(std::move(ch));
        }
      }
      // assign leftover points to child tiles; tiles are closed boxes scanned
      // in ascending order, so shared-edge points land in the lower tile
      for (int c : rest) {
        int target = -1;
        for (std::size_t t = 0; t < children.size() && target == -1; ++t) {
          bool inside = true;
          for (int k = 0; k < d; ++k) {
            const double v = s.points()(c, k);
            if (v < children[t].lo[k] || v > children[t].hi[k]) {
              inside = false;
              break;
            }
          }
          if (inside) target = static_cast<int>(t);
        }
        if (target == -1) throw NumericError("make_mra: point escaped its region tiles");
        children[target].candidates.push_back(c);
      }
      for (auto& ch : children) regions.push_back(std::move(ch));
    }
    region_points.push_back(std::move(selected));
  }

  // drop empty regions, compact indices
  std::vector<int> new_id(regions.size(), -1);
  std::vector<std::vector<int>> blocks;
  std::vector<int> kept_region;
  for (std::size_t ri = 0; ri < regions.size(); ++ri) {
    if (!region_points[ri].empty()) {
      new_id[ri] = static_cast<int>(blocks.size());
      blocks.push_back(region_points[ri]);
      kept_region.push_back(static_cast<int>(ri));
    }
  }
  if (blocks.empty()) throw ArgumentError("make_mra: no blocks produced");
  const int l = static_cast<int>(blocks.size());
  Grouping g(std::move(blocks), s.size());
  std::vector<std::vector<int>> q(l);
  for (int b = 0; b < l; ++b) {
    for (int p = regions[kept_region[b]].parent; p != -1; p = regions[p].parent) {
      if (new_id[p] != -1) q[b].push_back(new_id[p]);
    }
    std::sort(q[b].begin(), q[b].end());
  }
  return finish_latent(s, std::move(g), Ordering::identity(l), std::vector<char>(l, 1),
                       std::move(q));
}

VecchiaPlan make_pointwise_plan(const LocationSet& s, OrderingKind ordering,
                                const ConditioningRule& rule, PartitionKind partition,
                                std::vector<std::string>* warnings) {
  const int n = s.size();
  std::vector<std::vector<int>> singletons(n);
  for (int i = 0; i < n; ++i) singletons[i] = {i};
  Grouping g(std::move(singletons), n);
  Ordering order = Ordering::identity(n);
  if (ordering == OrderingKind::coord) order = coord_order(s);
  if (ordering == OrderingKind::maxmin) order = maxmin_order(s);
  std::vector<std::vector<int>> q = build_q(s, g, order, rule);
  VecchiaPlan plan{s,      std::move(g),
                   std::move(order), std::vector<char>(n, 1),
                   std::move(q),     std::vector<std::vector<int>>(n),
                   std::vector<std::vector<int>>(n)};
  switch (partition) {
    case PartitionKind::standard:
      return partition_standard(std::move(plan), warnings);
    case PartitionKind::latent:
      return partition_latent(std::move(plan));
    case PartitionKind::sgv:
      return partition_sgv(std::move(plan), warnings);
  }
  throw ArgumentError("make_pointwise_plan: unknown partition");
}

}  // namespace vecchia
