#pragma once

#include <cmath>
#include <cstdint>

namespace tdlab {

// Deterministic 64-bit generator (SplitMix64). Every random draw in the
// library goes through this class, so simulated results are bit-reproducible
// across platforms, compilers and thread schedules. The uniform mapping uses
// the top 53 bits of the raw output, giving doubles in [0, 1).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform draw from [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform draw from {0, ..., n - 1}; n must be positive.
  int uniform_int(int n) {
    const int k = static_cast<int>(uniform01() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  // Standard exponential via inverse CDF; the argument of log stays in
  // (2^-53, 1], so the result is always finite.
  double exponential() { return -std::log(1.0 - uniform01()); }

 private:
  std::uint64_t state_;
};

// Stream-splitting hash: derives an independent child seed from a master
// seed and an index. Used to give each run (and each sub-stream within a
// run) its own generator, so results do not depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  SplitMix64 g(master ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  return g.next();
}

}  // namespace tdlab
