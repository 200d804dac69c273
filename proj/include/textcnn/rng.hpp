#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace textcnn {

namespace detail {

// SplitMix64 (Steele, Lea, Flood 2014); used to turn (seed, stream) into a
// well-mixed engine seed so distinct stream ids give unrelated substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic substream of pseudo-random numbers: a std::mt19937_64
/// (fully specified by the standard, hence reproducible across runs) seeded
/// from SplitMix64(seed ^ SplitMix64(stream)). Uniform doubles are built
/// from the top 53 bits of raw draws rather than a distribution object so
/// the value sequence is pinned by this header alone. One stream has one
/// owner; concurrent work takes distinct stream ids.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed),
        stream_(stream),
        engine_(detail::splitmix64(seed ^ detail::splitmix64(stream))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi). The upper bound stays exclusive even after
  /// rounding in low-precision casts of the result.
  double uniform(double lo, double hi) {
    double v = lo + next_double() * (hi - lo);
    if (v >= hi) v = std::nextafter(hi, lo);
    return v;
  }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  /// Independent child stream; deterministic function of (seed, stream, k).
  RngStream split(std::uint64_t k) const {
    return RngStream(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(k)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

// Stream-id layout used by the toolkit. Per-epoch streams make training
// resumable at any epoch boundary without serializing engine state.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSynthTrain = 2;
inline constexpr std::uint64_t kSynthTest = 3;
inline constexpr std::uint64_t kShuffleBase = 0x1000;
inline constexpr std::uint64_t kDropoutBase = 0x2000;
inline std::uint64_t shuffle(std::size_t epoch) { return kShuffleBase + epoch; }
inline std::uint64_t dropout(std::size_t epoch) { return kDropoutBase + epoch; }
}  // namespace streams

}  // namespace textcnn
