#pragma once

#include <cstdint>
#include <vector>

namespace mtb {

/// Counter-based generator. Every draw is a pure function of (key, counter),
/// so element i of a stream can be produced independently of element i-1.
/// split() derives a statistically independent child stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return at(counter_++); }
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return to_unit(next_u64()); }
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Random draw at a fixed counter offset; does not advance the stream.
  std::uint64_t at(std::uint64_t counter) const;
  double uniform_at(std::uint64_t counter) const { return to_unit(at(counter)); }

  /// Reserve `n` counters and return the first; used by kernels that draw
  /// element-wise in parallel.
  std::uint64_t reserve(std::uint64_t n) {
    const auto base = counter_;
    counter_ += n;
    return base;
  }

  Rng split(std::uint64_t id) const;

  std::uint64_t key() const { return key_; }

  static double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mtb
