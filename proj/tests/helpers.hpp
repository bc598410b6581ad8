#pragma once

#include <vector>

#include "vecchia/plan.hpp"
#include "vecchia/rng.hpp"

namespace testutil {

inline vecchia::LocationSet random_points(int n, int d, std::uint64_t seed) {
  vecchia::CounterRng rng(seed);
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) pts(i, k) = rng.uniform();
  }
  return vecchia::LocationSet(std::move(pts));
}

// Seven singleton blocks on a line with explicit conditioning sets.
// Distances are arranged so the anchor tie-breaks pick block 3 for block 4
// and block 4 for block 5 (0-based).
inline vecchia::VecchiaPlan toy_plan(vecchia::PartitionKind partition) {
  Eigen::MatrixXd pts(7, 1);
  pts << 0.0, 1.0, 2.0, 3.0, 3.5, 4.2, 4.4;
  vecchia::LocationSet s(pts);
  std::vector<std::vector<int>> q{{}, {0}, {0, 1}, {0, 2}, {1, 3}, {2, 4}, {4, 5}};
  vecchia::ConditioningRule rule = vecchia::ConditioningRule::explicit_lists(q);
  return make_pointwise_plan(s, vecchia::OrderingKind::native, rule, partition);
}

// Random singleton plan with all blocks observed and random conditioning
// sets of size at most m.
inline vecchia::VecchiaPlan random_plan(int n, int m, vecchia::PartitionKind partition,
                                        std::uint64_t seed) {
  vecchia::LocationSet s = random_points(n, 2, seed);
  vecchia::CounterRng rng(seed ^ 0xabcdef);
  std::vector<std::vector<int>> q(n);
  for (int i = 1; i < n; ++i) {
    const int want = std::min(i, static_cast<int>(rng.uniform() * (m + 1)));
    std::vector<int> pool(i);
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < want; ++k) {
      const int pick = k + static_cast<int>(rng.uniform() * (i - k));
      std::swap(pool[k], pool[pick]);
    }
    q[i].assign(pool.begin(), pool.begin() + want);
    std::sort(q[i].begin(), q[i].end());
  }
  vecchia::ConditioningRule rule = vecchia::ConditioningRule::explicit_lists(q);
  return make_pointwise_plan(s, vecchia::OrderingKind::native, rule, partition);
}

}  // namespace testutil
