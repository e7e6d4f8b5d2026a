#include "mtb/rng.hpp"

#include <cmath>
#include <numbers>

namespace mtb {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x2545f4914f6cdd1dULL))) {}

std::uint64_t Rng::at(std::uint64_t counter) const {
  // Two rounds of mixing decorrelate neighbouring counters under one key.
  return splitmix64(key_ ^ splitmix64(counter));
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded so each call consumes a
  // fixed number of counters.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

Rng Rng::split(std::uint64_t id) const {
  Rng child(0, 0);
  child.key_ = splitmix64(key_ ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return child;
}

}  // namespace mtb
