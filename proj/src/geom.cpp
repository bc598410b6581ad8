#include "vecchia/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vecchia/errors.hpp"

namespace vecchia {

LocationSet::LocationSet(Eigen::MatrixXd points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1) {
    throw ArgumentError("LocationSet: need at least one point in at least one dimension");
  }
  if (!points_.allFinite()) {
    throw ArgumentError("LocationSet: non-finite coordinate");
  }
  const int n = static_cast<int>(points_.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((points_.row(i) - points_.row(j)).squaredNorm() == 0.0) {
        throw ArgumentError("LocationSet: duplicate points at indices " + std::to_string(i) +
                            " and " + std::to_string(j));
      }
    }
  }
}

Ordering::Ordering(std::vector<int> perm) : perm_(std::move(perm)) {
  const int n = static_cast<int>(perm_.size());
  if (n == 0) throw ArgumentError("Ordering: empty permutation");
  std::vector<char> seen(n, 0);
  for (int v : perm_) {
    if (v < 0 || v >= n || seen[v]) throw ArgumentError("Ordering: not a permutation");
    seen[v] = 1;
  }
}

Ordering Ordering::identity(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return Ordering(std::move(p));
}

std::vector<int> Ordering::inverse() const {
  std::vector<int> inv(perm_.size());
  for (int pos = 0; pos < size(); ++pos) inv[perm_[pos]] = pos;
  return inv;
}

Grouping::Grouping(std::vector<std::vector<int>> blocks, int n_items)
    : blocks_(std::move(blocks)), n_items_(n_items) {
  if (blocks_.empty()) throw ArgumentError("Grouping: no blocks");
  std::vector<char> seen(n_items, 0);
  int covered = 0;
  for (const auto& b : blocks_) {
    if (b.empty()) throw ArgumentError("Grouping: empty block");
    for (int v : b) {
      if (v < 0 || v >= n_items || seen[v]) {
        throw ArgumentError("Grouping: blocks must partition 0.." + std::to_string(n_items - 1));
      }
      seen[v] = 1;
      ++covered;
    }
  }
  if (covered != n_items) throw ArgumentError("Grouping: blocks do not cover all items");
}

LocationSet grid_locations(int dim, int points_per_side, double spacing) {
  if (dim < 1) throw ArgumentError("grid_locations: dim must be >= 1");
  if (points_per_side < 1) throw ArgumentError("grid_locations: points_per_side must be >= 1");
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw ArgumentError("grid_locations: spacing must be positive and finite");
  }
  long long total = 1;
  for (int k = 0; k < dim; ++k) {
    total *= points_per_side;
    if (total > kGridMaxPoints) {
      throw SizeError("grid_locations: grid exceeds maximum of " +
                      std::to_string(kGridMaxPoints) + " points");
    }
  }
  Eigen::MatrixXd pts(total, dim);
  std::vector<int> digit(dim, 0);
  for (long long row = 0; row < total; ++row) {
    for (int k = 0; k < dim; ++k) pts(row, k) = digit[k] * spacing;
    for (int k = dim - 1; k >= 0; --k) {  // lexicographic: last coordinate fastest
      if (++digit[k] < points_per_side) break;
      digit[k] = 0;
    }
  }
  return LocationSet(std::move(pts));
}

Ordering coord_order(const LocationSet& s) {
  const auto& p = s.points();
  std::vector<int> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    for (int k = 0; k < s.dim(); ++k) {
      if (p(a, k) != p(b, k)) return p(a, k) < p(b, k);
    }
    return false;
  });
  return Ordering(std::move(perm));
}

namespace detail {

std::vector<int> maxmin_select(const Eigen::MatrixXd& pts, const std::vector<int>& candidates,
                               int count) {
  const int n = static_cast<int>(candidates.size());
  if (n == 0 || count <= 0) return {};
  count = std::min(count, n);

  Eigen::RowVectorXd cen = centroid(pts, candidates);
  int seed = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    double d = (pts.row(candidates[k]) - cen).squaredNorm();
    if (d < best) {
      best = d;
      seed = k;
    }
  }

  std::vector<int> chosen;
  chosen.reserve(count);
  std::vector<char> taken(n, 0);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  int cur = seed;
  for (int step = 0; step < count; ++step) {
    taken[cur] = 1;
    chosen.push_back(candidates[cur]);
    if (step + 1 == count) break;
    int next = -1;
    double next_d2 = -1.0;
    for (int k = 0; k < n; ++k) {
      if (taken[k]) continue;
      double d2 = (pts.row(candidates[k]) - pts.row(candidates[cur])).squaredNorm();
      if (d2 < min_d2[k]) min_d2[k] = d2;
      if (min_d2[k] > next_d2) {  // strict: ties keep the smaller candidate index
        next_d2 = min_d2[k];
        next = k;
      }
    }
    cur = next;
  }
  return chosen;
}

std::vector<int> nearest_previous_rows(const Eigen::MatrixXd& pts, int pos, int m) {
  if (pos < 0 || pos >= pts.rows()) throw ArgumentError("nearest_previous: position out of range");
  if (m < 0) throw ArgumentError("nearest_previous: m must be >= 0");
  const int take = std::min(m, pos);
  if (take == 0) return {};
  std::vector<std::pair<double, int>> cand;
  cand.reserve(pos);
  for (int j = 0; j < pos; ++j) {
    cand.emplace_back((pts.row(j) - pts.row(pos)).squaredNorm(), j);
  }
  std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
  std::vector<int> out(take);
  for (int k = 0; k < take; ++k) out[k] = cand[k].second;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

Ordering maxmin_order(const LocationSet& s) {
  std::vector<int> all(s.size());
  std::iota(all.begin(), all.end(), 0);
  return Ordering(detail::maxmin_select(s.points(), all, s.size()));
}

namespace detail {

TileAssignment tile_coordinates(const LocationSet& s, int blocks_per_side) {
  if (blocks_per_side < 1) throw ArgumentError("tile_coordinates: blocks_per_side must be >= 1");
  const int d = s.dim();
  const int bps = blocks_per_side;
  Eigen::RowVectorXd lo = s.points().colwise().minCoeff();
  Eigen::RowVectorXd hi = s.points().colwise().maxCoeff();
  TileAssignment out;
  out.ids.resize(s.size());
  for (int i = 0; i < s.size(); ++i) {
    long long tile = 0;
    for (int k = 0; k < d; ++k) {
      const double width = (hi[k] - lo[k]) / bps;
      int t = 0;
      if (width > 0.0) {
        t = static_cast<int>(std::floor((s.points()(i, k) - lo[k]) / width));
        t = std::min(t, bps - 1);
        if (t > 0 && s.points()(i, k) == lo[k] + t * width) --t;  // boundary: lower tile
      }
      tile = tile * bps + t;
    }
    out.ids[i] = tile;
  }
  return out;
}

}  // namespace detail

Grouping block_partition(const LocationSet& s, const Ordering& order, int blocks_per_side) {
  if (order.size() != s.size()) throw ArgumentError("block_partition: ordering size mismatch");
  const auto tiles = detail::tile_coordinates(s, blocks_per_side);
  long long n_tiles = 1;
  for (int k = 0; k < s.dim(); ++k) n_tiles *= blocks_per_side;
  std::vector<std::vector<int>> by_tile(n_tiles);
  for (int pos = 0; pos < order.size(); ++pos) {
    const int i = order.at(pos);
    by_tile[tiles.ids[i]].push_back(i);
  }
  std::vector<std::vector<int>> blocks;
  for (auto& t : by_tile) {
    if (!t.empty()) blocks.push_back(std::move(t));
  }
  return Grouping(std::move(blocks), s.size());
}

std::vector<int> nearest_previous(const LocationSet& s, const Ordering& order, int pos, int m) {
  if (order.size() != s.size()) throw ArgumentError("nearest_previous: ordering size mismatch");
  Eigen::MatrixXd ordered(s.size(), s.dim());
  for (int k = 0; k < order.size(); ++k) ordered.row(k) = s.points().row(order.at(k));
  return detail::nearest_previous_rows(ordered, pos, m);
}

Eigen::RowVectorXd centroid(const Eigen::MatrixXd& points, const std::vector<int>& idx) {
  if (idx.empty()) throw ArgumentError("centroid: empty index set");
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(points.cols());
  for (int i : idx) c += points.row(i);
  return c / static_cast<double>(idx.size());
}

}  // namespace vecchia
