#pragma once

// Self-contained deterministic RNG. std::normal_distribution is not
// bit-stable across standard libraries, so all sampling is done here.
// Streams are derived from (seed, tag, counters) and are replayable.

#include <cstdint>
#include <string>
#include <vector>

namespace imfseg {

std::uint64_t splitmix64(std::uint64_t& state);

/// FNV-1a over a byte string; used to fold sample ids into stream keys.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p = 0.5);
  /// Standard normal via Box-Muller (no cached spare; fully stateless
  /// apart from the stream position).
  double normal();
  double normal(double mean, double sigma);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

/// Derives an independent stream key from a seed, a purpose tag, and up to
/// three counters. Identical inputs give identical streams.
std::uint64_t derive_key(std::uint64_t seed, const std::string& tag,
                         std::uint64_t a = 0, std::uint64_t b = 0,
                         std::uint64_t c = 0);

inline Rng derive_rng(std::uint64_t seed, const std::string& tag,
                      std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
  return Rng(derive_key(seed, tag, a, b, c));
}

}  // namespace imfseg
