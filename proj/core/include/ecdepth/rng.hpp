#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ecdepth {

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the distribution mappings live here (not std::*_distribution, whose output
// is implementation-defined) so that identical seeds give identical streams
// on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Named substream derivation: every random decision in the pipeline hangs
  // off (master seed, stream name, indices), so replaying any step never
  // depends on hidden RNG state.
  static uint64_t derive(uint64_t master, std::string_view stream, uint64_t a = 0, uint64_t b = 0);

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();

  // Poisson(lambda) by inversion (Knuth); fine for the lambdas used here.
  int poisson(double lambda);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ecdepth
