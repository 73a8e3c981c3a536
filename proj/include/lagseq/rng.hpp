#pragma once

// Reproducible random streams. Each stream is keyed by (seed, replication,
// purpose) through a splitmix64 mix, so a replication's draws do not depend
// on which worker ran it or in what order.
//
// Variates are produced from raw 64-bit words rather than through the
// <random> distributions, whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>

#include "normal.hpp"

namespace lagseq {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t rep, std::uint64_t purpose) {
  return splitmix64(splitmix64(splitmix64(seed) ^ rep) ^ (purpose * 0xd1b54a32d192ed03ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t key) : eng_(key) {}
  Rng(std::uint64_t seed, std::uint64_t rep, std::uint64_t purpose)
      : eng_(stream_key(seed, rep, purpose)) {}

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal::quantile(uniform()); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace lagseq
