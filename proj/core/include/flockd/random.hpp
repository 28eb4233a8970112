#pragma once

#include <cstdint>

namespace flockd {

// Stateless counter-based generator: every draw is a pure function of
// (seed, stream, index), so results do not depend on draw order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t index) const;
  // Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const;
  // Standard normal via Box-Muller on draws 2*index and 2*index+1.
  double normal(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace flockd
