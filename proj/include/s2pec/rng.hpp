#pragma once

#include <cstdint>
#include <random>

namespace s2pec {

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; the distributions below are implemented here because the
// standard library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);

  // Standard normal via Box-Muller (one draw cached).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent stream, e.g. one per utterance.
  Rng fork(uint64_t salt);

  // Stream determined only by (seed, salt), independent of draw order.
  static Rng derived(uint64_t seed, uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace s2pec
