#pragma once

#include <cstdint>
#include <random>

namespace gecal {

// Seeded random streams with documented derivation: a master seed is mixed
// with a stream tag and an index through SplitMix64, and the result seeds a
// mt19937_64 engine.  Distinct (tag, index) pairs give independent streams,
// so replications can run concurrently with deterministic output.
//
//   population stream   = Stream(seed, kPopulationTag)
//   replication r, try a = Stream(seed, kReplicationTag, r * 1024 + a)
//
// Variate transforms are hand-rolled (not std::*_distribution) so that the
// byte-identical determinism guarantee does not depend on the standard
// library implementation.

std::uint64_t splitmix64(std::uint64_t& state);

inline constexpr std::uint64_t kPopulationTag = 0x706f70756c617465ull;
inline constexpr std::uint64_t kReplicationTag = 0x7265706c69636174ull;

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0);

  // Uniform on [0, 1).
  double uniform();
  // Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  // Standard normal via Box-Muller; one spare value is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gecal
