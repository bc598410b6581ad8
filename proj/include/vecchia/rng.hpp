#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace vecchia {

// Wichura's PPND16 rational approximation of the standard normal quantile;
// pure arithmetic, so results are identical across platforms.
double normal_quantile(double p);

/// Counter-based generator: output k is a SplitMix64 hash of (seed, stream, k),
/// so draws are reproducible and independent across streams.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  double uniform();  // in (0, 1)
  double normal();   // standard normal via the quantile function
  Eigen::VectorXd normals(int n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace vecchia
