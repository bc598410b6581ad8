#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vecchia {

// Largest point count grid_locations will produce.
inline constexpr long long kGridMaxPoints = 10'000'000;

/// A fixed set of distinct points in R^d, one per row.
class LocationSet {
 public:
  // Rejects empty sets, non-finite coordinates, and duplicate points.
  explicit LocationSet(Eigen::MatrixXd points);

  int size() const { return static_cast<int>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::RowVectorXd point(int i) const { return points_.row(i); }
  double distance(int i, int j) const { return (points_.row(i) - points_.row(j)).norm(); }

 private:
  Eigen::MatrixXd points_;
};

/// A permutation: at(k) is the original index placed at position k.
class Ordering {
 public:
  explicit Ordering(std::vector<int> perm);
  static Ordering identity(int n);

  int size() const { return static_cast<int>(perm_.size()); }
  int at(int pos) const { return perm_[pos]; }
  const std::vector<int>& perm() const { return perm_; }
  // inverse()[original] = position
  std::vector<int> inverse() const;

 private:
  std::vector<int> perm_;
};

/// Disjoint nonempty index blocks covering 0..n_items-1.
class Grouping {
 public:
  Grouping(std::vector<std::vector<int>> blocks, int n_items);

  int block_count() const { return static_cast<int>(blocks_.size()); }
  int n_items() const { return n_items_; }
  const std::vector<int>& block(int i) const { return blocks_[i]; }
  const std::vector<std::vector<int>>& blocks() const { return blocks_; }

 private:
  std::vector<std::vector<int>> blocks_;
  int n_items_;
};

// Regular lattice with points_per_side^dim points in lexicographic order.
LocationSet grid_locations(int dim, int points_per_side, double spacing);

// Stable lexicographic sort: coordinate 0, then 1, ..., then original index.
Ordering coord_order(const LocationSet& s);

// Exact greedy maxmin ordering: seed at the point nearest the centroid, then
// repeatedly take the point maximizing min distance to everything already
// placed. Ties go to the smallest original index.
Ordering maxmin_order(const LocationSet& s);

// Axis-aligned equal tiling of the bounding box into blocks_per_side^d tiles;
// nonempty tiles become blocks ordered by lexicographic tile index. Points on
// interior tile boundaries go to the lower-index tile. Points within a block
// are listed in `order` order.
Grouping block_partition(const LocationSet& s, const Ordering& order, int blocks_per_side);

// The min(m, pos) positions among 0..pos-1 closest to the point at ordered
// position pos; distance ties broken by smaller position; result ascending.
std::vector<int> nearest_previous(const LocationSet& s, const Ordering& order, int pos, int m);

// Mean of the selected rows.
Eigen::RowVectorXd centroid(const Eigen::MatrixXd& points, const std::vector<int>& idx);

namespace detail {

// Lexicographic tile id per point for the equal bounding-box tiling used by
// block_partition (shared so tile adjacency can be recovered elsewhere).
struct TileAssignment {
  std::vector<long long> ids;  // one per point
};
TileAssignment tile_coordinates(const LocationSet& s, int blocks_per_side);

// nearest_previous on a raw point matrix whose rows are already in order.
std::vector<int> nearest_previous_rows(const Eigen::MatrixXd& pts, int pos, int m);

// Greedy maxmin over `candidates` (row indices into pts); returns up to
// `count` of them in selection order. Seeded nearest the candidate centroid.
std::vector<int> maxmin_select(const Eigen::MatrixXd& pts, const std::vector<int>& candidates,
                               int count);

}  // namespace detail
}  // namespace vecchia
