#include "ecdepth/rng.hpp"

#include <cmath>

namespace ecdepth {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t Rng::derive(uint64_t master, std::string_view stream, uint64_t a, uint64_t b) {
  uint64_t h = splitmix64(master ^ fnv1a(stream));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b * 0x9e3779b97f4a7c15ull + 1));
  return h;
}

double Rng::normal() {
  // Box-Muller; u1 nudged away from zero so log stays finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  double limit = std::exp(-lambda);
  double p = 1.0;
  int k = 0;
  do {
    ++k;
    p *= uniform();
  } while (p > limit);
  return k - 1;
}

}  // namespace ecdepth
