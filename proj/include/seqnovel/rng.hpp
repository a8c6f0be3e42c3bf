#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace seqnovel {

/// SplitMix64 generator (Steele, Lea & Flood, 2014). Small and fully
/// portable: the output stream depends only on the 64-bit seed, never on
/// platform or standard-library internals, so seeded experiments reproduce
/// bit-for-bit everywhere.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Unbiased integer in [0, n); n must be >= 1. Rejection sampling, so the
  /// result is exact for every n.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

 private:
  std::uint64_t state_;
};

/// Derives the seed of an independent substream. Streams are addressed by an
/// integer path (e.g. {split, sequence_index}) folded into the root seed, so
/// any stream can be reconstructed directly without sampling its siblings.
inline std::uint64_t derive_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = seed;
  for (std::uint64_t p : path) {
    SplitMix64 mix(s ^ (p + 0x517cc1b727220a95ull));
    s = mix.next();
  }
  return s;
}

/// Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

/// Samples an index from a categorical distribution (probs sums to 1).
inline std::size_t sample_categorical(std::span<const double> probs,
                                      SplitMix64& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace seqnovel
